//! End-to-end generation-then-retrieval pipeline: dataset ingestion, pseudo
//! caption generation, confidence-weighted training of a reference retrieval
//! model, and evaluation.

pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod generation;
pub mod manifest;
pub mod model;
pub mod records;
pub mod synth;
pub mod train;

use std::path::Path;

use config::PipelineConfig;
use error::PipelineError;
use evaluate::PipelineReport;

/// Serialize the report as one JSON object, LF-terminated.
pub fn write_report(path: &Path, report: &PipelineReport) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string(report)
        .map_err(|e| PipelineError::Serialization(e.to_string()))?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Ingest, generate, train and evaluate in one pass, writing the caption
/// file, the model artifact and the report to their configured paths.
pub fn run_all(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let corpus = manifest::ingest(config.manifest_path()?)?;
    generation::run_generation_to_file(&corpus, config, config.captions_path()?)?;
    let captions = records::read_caption_file(config.captions_path()?)?;
    let outcome = train::train(&corpus, &captions, config)?;
    outcome.model.save(config.model_path()?)?;
    let split = evaluate::parse_split(&config.eval_split)?;
    let report = evaluate::evaluate(&outcome.model, &corpus, split)?;
    write_report(config.report_path()?, &report)?;
    Ok(report)
}
