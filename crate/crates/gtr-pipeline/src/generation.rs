//! The generation stage: pseudo captions for every training image, persisted
//! sorted and byte-reproducible for a fixed config and seed.

use std::path::Path;

use gtr_core::a2t::{
    attribute_word_sequence, compose_pseudo_caption, render_template, A2tBackend,
    EchoTemplateBackend,
};
use gtr_core::confidence::aggregate_confidence;
use gtr_core::i2a::{extract_attributes, MockOracle, MockOracleConfig, VqaBackend};
use gtr_core::seed::derive_seed;
use gtr_core::types::{CaptionSource, PseudoCaption, Split};

use crate::config::{A2tMode, PipelineConfig};
use crate::error::PipelineError;
use crate::manifest::Corpus;
use crate::records::write_caption_file;

/// Build the VQA backend named in the configuration.
///
/// "mock" answers from the manifest's attribute columns; real-model adapters
/// are external plugins, so any other name is a backend error.
pub fn resolve_backend(
    config: &PipelineConfig,
    corpus: &Corpus,
) -> Result<Box<dyn VqaBackend>, PipelineError> {
    match config.vqa_backend.as_str() {
        "mock" => {
            let truth_table = corpus.truth_table.clone().ok_or_else(|| {
                PipelineError::Backend(
                    "mock backend needs a manifest with attribute columns".to_string(),
                )
            })?;
            Ok(Box::new(MockOracle::new(MockOracleConfig {
                truth_table,
                flip_probability: config.mock_flip_probability,
                confidence_law_correct: config.mock_confidence_correct,
                confidence_law_flipped: config.mock_confidence_flipped,
                seed: derive_seed(config.seed, &["generation"]),
            })))
        }
        other => Err(PipelineError::Backend(format!(
            "unknown VQA backend {other:?}"
        ))),
    }
}

/// Generate one pseudo caption per train-split image.
///
/// Output depends only on the corpus, the backend and the seed; retrieval
/// knobs never reach this stage.
pub fn run_generation(
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Result<Vec<PseudoCaption>, PipelineError> {
    let backend = resolve_backend(config, corpus)?;
    let lm_backend = EchoTemplateBackend;

    let mut images = corpus.split_images(Split::Train);
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut captions = Vec::with_capacity(images.len());
    for image in images {
        let set = extract_attributes(image, backend.as_ref())
            .map_err(|e| PipelineError::from_i2a(&image.image_id, e))?;
        let confidence = aggregate_confidence(&set).map_err(|e| PipelineError::Generation {
            image_id: image.image_id.clone(),
            message: e.to_string(),
        })?;
        let (a2t_text, source) = match config.a2t_mode {
            A2tMode::Template => (render_template(&set), CaptionSource::Template),
            A2tMode::Lm => {
                let words = attribute_word_sequence(&set);
                let text = lm_backend
                    .convert(&words)
                    .map_err(|e| PipelineError::Backend(e.to_string()))?;
                (text, CaptionSource::Lm)
            }
        };
        let ic_caption = backend
            .caption(image)
            .map_err(|e| PipelineError::from_i2a(&image.image_id, e))?;
        captions.push(compose_pseudo_caption(
            &a2t_text,
            &ic_caption,
            &set,
            confidence,
            source,
        ));
    }
    Ok(captions)
}

/// Run generation and persist the records.
pub fn run_generation_to_file(
    corpus: &Corpus,
    config: &PipelineConfig,
    path: &Path,
) -> Result<usize, PipelineError> {
    let captions = run_generation(corpus, config)?;
    write_caption_file(path, &captions)?;
    Ok(captions.len())
}
