//! Dataset manifest: JSON-lines, one image per line, with optional
//! ground-truth attributes (for the mock oracle) and reference captions.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use gtr_core::i2a::GroundTruth;
use gtr_core::types::{AttributeKey, ImageRecord, Split};

use crate::error::PipelineError;

/// One manifest line as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestLine {
    pub image_id: String,
    pub path: String,
    pub identity_id: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<AttributeKey, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// A validated corpus: image records plus whatever optional columns the
/// manifest carried.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<ImageRecord>,
    /// Ground-truth attributes per image; present iff the manifest has the
    /// attribute column (all lines or none).
    pub truth_table: Option<BTreeMap<String, GroundTruth>>,
    /// Held-out reference captions; never used in training.
    pub captions: BTreeMap<String, String>,
}

impl Corpus {
    pub fn split_images(&self, split: Split) -> Vec<&ImageRecord> {
        self.images.iter().filter(|i| i.split == split).collect()
    }
}

fn validate_attributes(
    line_number: usize,
    attributes: &BTreeMap<AttributeKey, String>,
) -> Result<(), PipelineError> {
    for key in AttributeKey::ALL {
        let value = attributes.get(&key).ok_or_else(|| PipelineError::Parse {
            line: line_number,
            message: format!("attributes map lacks key {key}"),
        })?;
        if let Some((yes, no)) = key.boolean_tokens() {
            if value != yes && value != no {
                return Err(PipelineError::Parse {
                    line: line_number,
                    message: format!("{key} must be {yes:?} or {no:?}, got {value:?}"),
                });
            }
        } else if value.trim().is_empty() {
            return Err(PipelineError::Parse {
                line: line_number,
                message: format!("{key} must not be empty"),
            });
        }
    }
    if attributes.len() != AttributeKey::ALL.len() {
        return Err(PipelineError::Parse {
            line: line_number,
            message: format!("attributes map has {} keys, expected 14", attributes.len()),
        });
    }
    Ok(())
}

/// Read and validate a manifest file.
pub fn ingest(path: &Path) -> Result<Corpus, PipelineError> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);

    let mut images = Vec::new();
    let mut truth_table: BTreeMap<String, GroundTruth> = BTreeMap::new();
    let mut captions = BTreeMap::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut with_attributes = 0usize;
    let mut total = 0usize;

    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let record: ManifestLine =
            serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
                line: number,
                message: e.to_string(),
            })?;
        if !seen_ids.insert(record.image_id.clone()) {
            return Err(PipelineError::DuplicateImageId(record.image_id));
        }
        total += 1;
        if let Some(attributes) = &record.attributes {
            validate_attributes(number, attributes)?;
            with_attributes += 1;
            truth_table.insert(record.image_id.clone(), attributes.clone());
        }
        if let Some(caption) = &record.caption {
            captions.insert(record.image_id.clone(), caption.clone());
        }
        images.push(ImageRecord {
            image_id: record.image_id,
            path: record.path,
            identity_id: record.identity_id,
            split: record.split,
        });
    }

    if with_attributes != 0 && with_attributes != total {
        return Err(PipelineError::MixedAttributeCoverage);
    }

    Ok(Corpus {
        images,
        truth_table: (with_attributes > 0).then_some(truth_table),
        captions,
    })
}

/// Write manifest lines, one JSON object per line, LF-terminated.
pub fn write_manifest(path: &Path, lines: &[ManifestLine]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    for line in lines {
        let json = serde_json::to_string(line)
            .map_err(|e| PipelineError::Config(format!("manifest serialization: {e}")))?;
        file.write_all(json.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
