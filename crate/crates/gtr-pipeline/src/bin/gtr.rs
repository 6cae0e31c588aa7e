use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gtr_pipeline::cli::cli(std::env::args()) as u8)
}
