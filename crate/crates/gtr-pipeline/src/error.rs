//! Pipeline error type with the machine-parsable code and exit-code mapping
//! the CLI reports.

use gtr_core::eval::EvalError;
use gtr_core::i2a::I2aError;
use gtr_core::losses::LossError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),
    #[error("attributes present on some manifest lines but not all")]
    MixedAttributeCoverage,
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("generation failed for image {image_id:?}: {message}")]
    Generation { image_id: String, message: String },
    #[error("captions file problem: {0}")]
    Captions(String),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("training failure: {0}")]
    Train(String),
    #[error("evaluation failure: {0}")]
    Eval(#[from] EvalError),
    #[error("serialization failure: {0}")]
    Serialization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Short machine-parsable code printed as `GTR-ERR:<code>:`.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Parse { .. }
            | PipelineError::DuplicateImageId(_)
            | PipelineError::MixedAttributeCoverage => "manifest",
            PipelineError::Backend(_) => "backend",
            PipelineError::Generation { .. } => "generation",
            PipelineError::Captions(_) => "captions",
            PipelineError::EmptyTrainSet
            | PipelineError::NonFiniteLoss { .. }
            | PipelineError::Train(_) => "train",
            PipelineError::Eval(_) => "eval",
            PipelineError::Serialization(_) | PipelineError::Io(_) => "io",
        }
    }

    /// 2 for backend failures, 1 for every other error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Backend(_) => 2,
            _ => 1,
        }
    }

    /// Wrap an extraction error, attaching the image it occurred on.
    /// Backend-side failures keep their backend classification.
    pub fn from_i2a(image_id: &str, error: I2aError) -> Self {
        match error {
            I2aError::BackendFailure { .. } | I2aError::UnknownImage { .. } => {
                PipelineError::Backend(format!("image {image_id:?}: {error}"))
            }
            other => PipelineError::Generation {
                image_id: image_id.to_string(),
                message: other.to_string(),
            },
        }
    }
}

impl From<LossError> for PipelineError {
    fn from(error: LossError) -> Self {
        PipelineError::Train(error.to_string())
    }
}
