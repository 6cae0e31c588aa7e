//! Persisted pseudo-caption records and style-pair training files, both
//! JSON-lines with LF terminators.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gtr_core::a2t::StylePair;
use gtr_core::confidence::{aggregate_confidence, ConfidenceScore};
use gtr_core::types::{
    validate_attribute_set, AttributeAnswer, AttributeKey, AttributeSet, CaptionSource,
    PseudoCaption,
};

use crate::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeEntry {
    pub key: AttributeKey,
    pub value: String,
    pub raw_answer: String,
    pub confidence: f64,
}

/// One pseudo caption as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCaptionRecord {
    pub image_id: String,
    pub text: String,
    pub confidence: f64,
    pub log_confidence: f64,
    pub source: CaptionSource,
    pub ic_caption: String,
    pub attributes: Vec<AttributeEntry>,
}

impl PseudoCaptionRecord {
    pub fn from_caption(caption: &PseudoCaption) -> Self {
        PseudoCaptionRecord {
            image_id: caption.image_id.clone(),
            text: caption.text.clone(),
            confidence: caption.confidence.value,
            log_confidence: caption.confidence.log_value,
            source: caption.source,
            ic_caption: caption.ic_caption.clone(),
            attributes: caption
                .attribute_set
                .answers
                .iter()
                .map(|a| AttributeEntry {
                    key: a.key,
                    value: a.value.clone(),
                    raw_answer: a.raw_answer.clone(),
                    confidence: a.confidence,
                })
                .collect(),
        }
    }

    /// Rebuild the caption, revalidating the attribute set and checking that
    /// the stored confidence reproduces the attribute-confidence product.
    pub fn into_caption(self) -> Result<PseudoCaption, PipelineError> {
        let set = AttributeSet {
            image_id: self.image_id.clone(),
            answers: self
                .attributes
                .into_iter()
                .map(|e| AttributeAnswer {
                    key: e.key,
                    raw_answer: e.raw_answer,
                    value: e.value,
                    confidence: e.confidence,
                })
                .collect(),
        };
        let set = validate_attribute_set(set)
            .map_err(|e| PipelineError::Captions(format!("image {:?}: {e}", self.image_id)))?;
        let aggregate = aggregate_confidence(&set)
            .map_err(|e| PipelineError::Captions(format!("image {:?}: {e}", self.image_id)))?;
        let relative = (aggregate.value - self.confidence).abs() / aggregate.value;
        if relative > 1e-12 {
            return Err(PipelineError::Captions(format!(
                "image {:?}: stored confidence {} does not reproduce the attribute product {} \
                 (relative error {relative})",
                self.image_id, self.confidence, aggregate.value
            )));
        }
        Ok(PseudoCaption {
            image_id: self.image_id,
            text: self.text,
            confidence: ConfidenceScore {
                value: self.confidence,
                log_value: self.log_confidence,
            },
            source: self.source,
            ic_caption: self.ic_caption,
            attribute_set: set,
        })
    }
}

/// Write captions sorted by image id, one record per line.
pub fn write_caption_file(path: &Path, captions: &[PseudoCaption]) -> Result<(), PipelineError> {
    let mut sorted: Vec<&PseudoCaption> = captions.iter().collect();
    sorted.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    for caption in sorted {
        let record = PseudoCaptionRecord::from_caption(caption);
        let json = serde_json::to_string(&record)
            .map_err(|e| PipelineError::Captions(format!("serialization: {e}")))?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_caption_file(path: &Path) -> Result<Vec<PseudoCaption>, PipelineError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut captions = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PseudoCaptionRecord = serde_json::from_str(&line).map_err(|e| {
            PipelineError::Captions(format!("line {}: {e}", index + 1))
        })?;
        captions.push(record.into_caption()?);
    }
    Ok(captions)
}

/// On-disk form of a style pair: the attribute sequence space-joined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StylePairRecord {
    pub attributes: String,
    pub text: String,
}

/// The exact serialization handed to a language-model finetuning adapter.
pub fn write_style_pairs(path: &Path, pairs: &[StylePair]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    for pair in pairs {
        let record = StylePairRecord {
            attributes: pair.attributes.join(" "),
            text: pair.text.clone(),
        };
        let json = serde_json::to_string(&record)
            .map_err(|e| PipelineError::Captions(format!("serialization: {e}")))?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
