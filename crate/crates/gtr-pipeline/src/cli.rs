//! The `gtr` command line: ingest | generate | train | evaluate | run-all.
//!
//! Exit codes: 0 on success, 1 on validation errors, 2 on backend failures.
//! Errors print to stderr with the machine-parsable prefix `GTR-ERR:<code>:`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use gtr_core::types::Split;

use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::evaluate::parse_split;
use crate::{evaluate, generation, manifest, records, train, write_report};

#[derive(Debug, Parser)]
#[command(
    name = "gtr",
    about = "Generation-then-retrieval pipeline for text-based person search",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Pipeline configuration file (flat key = value lines).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the confidence weight exponent.
    #[arg(long)]
    beta: Option<f64>,
    /// Override the attributes-to-text mode.
    #[arg(long, value_parser = ["template", "lm"])]
    a2t: Option<String>,
    /// Override the VQA backend name.
    #[arg(long)]
    backend: Option<String>,
    /// Override the subcommand's output path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate a dataset manifest and print split counts.
    Ingest(CommonArgs),
    /// Generate pseudo captions for the train split.
    Generate(CommonArgs),
    /// Train the reference retrieval model on generated captions.
    Train(CommonArgs),
    /// Evaluate a trained model on the configured split.
    Evaluate(CommonArgs),
    /// Ingest, generate, train and evaluate in one pass.
    RunAll(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<PipelineConfig, PipelineError> {
    let mut config = PipelineConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(beta) = args.beta {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(PipelineError::Config(format!("beta {beta} must be >= 0")));
        }
        config.beta = beta;
    }
    if let Some(a2t) = &args.a2t {
        config.a2t_mode = a2t.parse().map_err(PipelineError::Config)?;
    }
    if let Some(backend) = &args.backend {
        config.vqa_backend = backend.clone();
    }
    Ok(config)
}

fn run_command(command: &Command) -> Result<(), PipelineError> {
    match command {
        Command::Ingest(args) => {
            let config = load_config(args)?;
            let corpus = manifest::ingest(config.manifest_path()?)?;
            let count = |s: Split| corpus.split_images(s).len();
            println!(
                "ingested {} images (train {}, val {}, test {}), attributes: {}, captions: {}",
                corpus.images.len(),
                count(Split::Train),
                count(Split::Val),
                count(Split::Test),
                corpus.truth_table.is_some(),
                corpus.captions.len(),
            );
            Ok(())
        }
        Command::Generate(args) => {
            let mut config = load_config(args)?;
            if let Some(out) = &args.out {
                config.captions_path = Some(out.clone());
            }
            let corpus = manifest::ingest(config.manifest_path()?)?;
            let path = config.captions_path()?.to_path_buf();
            let written = generation::run_generation_to_file(&corpus, &config, &path)?;
            println!("wrote {written} pseudo captions to {}", path.display());
            Ok(())
        }
        Command::Train(args) => {
            let mut config = load_config(args)?;
            if let Some(out) = &args.out {
                config.model_path = Some(out.clone());
            }
            let corpus = manifest::ingest(config.manifest_path()?)?;
            let captions = records::read_caption_file(config.captions_path()?)?;
            let outcome = train::train(&corpus, &captions, &config)?;
            for (epoch, loss) in outcome.loss_curve.iter().enumerate() {
                println!("epoch {epoch}: loss {loss:.6}");
            }
            let path = config.model_path()?;
            outcome.model.save(path)?;
            println!("model saved to {}", path.display());
            Ok(())
        }
        Command::Evaluate(args) => {
            let mut config = load_config(args)?;
            if let Some(out) = &args.out {
                config.report_path = Some(out.clone());
            }
            let corpus = manifest::ingest(config.manifest_path()?)?;
            let model = crate::model::ReferenceRetrievalModel::load(config.model_path()?)?;
            let split = parse_split(&config.eval_split)?;
            let report = evaluate::evaluate(&model, &corpus, split)?;
            write_report(config.report_path()?, &report)?;
            print!("{}", report.eval.to_key_value());
            println!("split = {}\nquery_source = {}", report.split, report.query_source);
            Ok(())
        }
        Command::RunAll(args) => {
            let mut config = load_config(args)?;
            if let Some(out) = &args.out {
                config.report_path = Some(out.clone());
            }
            let report = crate::run_all(&config)?;
            print!("{}", report.eval.to_key_value());
            println!("split = {}\nquery_source = {}", report.split, report.query_source);
            Ok(())
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(argv) {
        Ok(parsed) => parsed,
        Err(e) => {
            // Usage and --help/--version go to the right stream; argument
            // errors count as validation failures.
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                0
            } else {
                eprintln!("GTR-ERR:usage: invalid arguments");
                1
            };
        }
    };
    match run_command(&parsed.command) {
        Ok(()) => 0,
        Err(error) => {
            eprintln!("GTR-ERR:{}: {error}", error.code());
            error.exit_code()
        }
    }
}
