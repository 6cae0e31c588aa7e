//! Dev utility: write a synthetic manifest with ground-truth attributes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use gtr_pipeline::manifest::write_manifest;
use gtr_pipeline::synth::{generate_manifest, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "gtr-synth", about = "Generate a synthetic dataset manifest")]
struct Args {
    /// Output manifest path (JSON-lines).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    #[arg(long, default_value_t = 4)]
    images_per_identity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the reference caption column.
    #[arg(long, default_value_t = false)]
    no_captions: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let lines = generate_manifest(&SynthConfig {
        identities: args.identities,
        images_per_identity: args.images_per_identity,
        seed: args.seed,
        with_captions: !args.no_captions,
    });
    match write_manifest(&args.out, &lines) {
        Ok(()) => {
            println!("wrote {} manifest lines to {}", lines.len(), args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("GTR-ERR:{}: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}
