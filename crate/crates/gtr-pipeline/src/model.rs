//! The reference retrieval model: two linear towers over attribute one-hots
//! and hashed bag-of-words, small enough to train on one CPU core in seconds.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gtr_core::i2a::GroundTruth;
use gtr_core::seed::derive_seed_bytes;
use gtr_core::types::AttributeKey;

use crate::error::PipelineError;

/// Fixed width of the hashed bag-of-words text features.
pub const TEXT_HASH_DIM: usize = 512;

/// FNV-1a, the documented token hash for the text tower.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercased alphanumeric runs of a text.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Bucket index of one token.
pub fn token_bucket(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % TEXT_HASH_DIM as u64) as usize
}

/// Token-count vector over the hash buckets.
pub fn hashed_bag_of_words(text: &str) -> Array1<f64> {
    let mut bow = Array1::zeros(TEXT_HASH_DIM);
    for token in tokenize(text) {
        bow[token_bucket(&token)] += 1.0;
    }
    bow
}

/// Per-key value vocabularies used to one-hot encode image attributes.
///
/// Built from the training-split ground truth; values unseen at build time
/// encode as an all-zero block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVocabulary {
    /// In prompt order; each entry carries the sorted values of one key.
    blocks: Vec<(AttributeKey, Vec<String>)>,
    dim: usize,
}

impl AttributeVocabulary {
    pub fn from_truth_table<'a>(
        entries: impl Iterator<Item = &'a GroundTruth>,
    ) -> AttributeVocabulary {
        let mut values: BTreeMap<AttributeKey, std::collections::BTreeSet<String>> =
            BTreeMap::new();
        for truth in entries {
            for (key, value) in truth {
                values.entry(*key).or_default().insert(value.clone());
            }
        }
        let blocks: Vec<(AttributeKey, Vec<String>)> = AttributeKey::ALL
            .iter()
            .map(|key| {
                (
                    *key,
                    values
                        .remove(key)
                        .map(|set| set.into_iter().collect())
                        .unwrap_or_default(),
                )
            })
            .collect();
        let dim = blocks.iter().map(|(_, v)| v.len()).sum();
        AttributeVocabulary { blocks, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Concatenated one-hot blocks for one image's ground truth.
    pub fn encode(&self, truth: &GroundTruth) -> Array1<f64> {
        let mut features = Array1::zeros(self.dim);
        let mut offset = 0usize;
        for (key, vocabulary) in &self.blocks {
            if let Some(value) = truth.get(key) {
                if let Ok(position) = vocabulary.binary_search(value) {
                    features[offset + position] = 1.0;
                }
            }
            offset += vocabulary.len();
        }
        features
    }
}

/// Trainable logistic head scoring a pair from its cosine similarity; the
/// two-way logits are `[0, scale * s + bias]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItmHead {
    pub scale: f64,
    pub bias: f64,
}

/// Identity classification head shared by both modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdHead {
    pub class_weights: Array2<f64>,
    pub biases: Array1<f64>,
    /// Class index -> identity id, sorted.
    pub classes: Vec<String>,
}

/// Two-tower linear encoder with optional loss heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRetrievalModel {
    pub attribute_vocabulary: AttributeVocabulary,
    /// `d x F` image projection.
    pub image_projection: Array2<f64>,
    /// `d x TEXT_HASH_DIM` text projection.
    pub text_projection: Array2<f64>,
    pub log_temperature: f64,
    pub itm_head: Option<ItmHead>,
    pub id_head: Option<IdHead>,
    /// `TEXT_HASH_DIM x d` masked-token prediction head.
    pub irr_head: Option<Array2<f64>>,
    /// Per-epoch mean training loss, appended by the trainer.
    pub loss_curve: Vec<f64>,
}

fn xavier_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

impl ReferenceRetrievalModel {
    /// Fresh model with seeded initialization.
    pub fn init(
        vocabulary: AttributeVocabulary,
        embedding_dim: usize,
        temperature_init: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::from_seed(derive_seed_bytes(seed, &["model-init"]));
        let image_projection = xavier_init(&mut rng, embedding_dim, vocabulary.dim());
        let text_projection = xavier_init(&mut rng, embedding_dim, TEXT_HASH_DIM);
        ReferenceRetrievalModel {
            attribute_vocabulary: vocabulary,
            image_projection,
            text_projection,
            log_temperature: temperature_init.ln(),
            itm_head: None,
            id_head: None,
            irr_head: None,
            loss_curve: Vec::new(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.image_projection.nrows()
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Unit-normalized image embedding of an attribute feature vector.
    pub fn embed_image(&self, features: &Array1<f64>) -> Array1<f64> {
        normalize(self.image_projection.dot(features))
    }

    /// Unit-normalized text embedding of a caption.
    pub fn embed_text(&self, text: &str) -> Array1<f64> {
        normalize(self.text_projection.dot(&hashed_bag_of_words(text)))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string(self)
            .map_err(|e| PipelineError::Train(format!("model serialization: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let content = std::fs::read_to_string(path)?;
        serde_json::from_str(&content)
            .map_err(|e| PipelineError::Train(format!("model deserialization: {e}")))
    }
}

/// Normalize to unit length; the norm is floored to dodge division by zero
/// for pathological all-zero features.
pub fn normalize(v: Array1<f64>) -> Array1<f64> {
    let norm = v.dot(&v).sqrt().max(1e-12);
    v.mapv(|x| x / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(values: &[(&str, AttributeKey)]) -> GroundTruth {
        let defaults = [
            "red", "shirt", "blue", "jeans", "white", "sneakers", "woman", "black", "long",
            "absent", "absent", "absent", "absent", "present",
        ];
        let mut t: GroundTruth = AttributeKey::ALL
            .iter()
            .zip(defaults)
            .map(|(k, v)| (*k, v.to_string()))
            .collect();
        for (v, k) in values {
            t.insert(*k, v.to_string());
        }
        t
    }

    #[test]
    fn vocabulary_encodes_one_hot_blocks() {
        let a = truth(&[("red", AttributeKey::ClothesColor)]);
        let b = truth(&[("blue", AttributeKey::ClothesColor)]);
        let vocabulary = AttributeVocabulary::from_truth_table([a.clone(), b.clone()].iter());
        let ea = vocabulary.encode(&a);
        let eb = vocabulary.encode(&b);
        assert_eq!(ea.len(), vocabulary.dim());
        // Each encoding has exactly 14 active positions (one per key).
        assert_eq!(ea.iter().filter(|&&v| v == 1.0).count(), 14);
        assert_ne!(ea, eb);
    }

    #[test]
    fn unseen_values_encode_as_zero_blocks() {
        let a = truth(&[]);
        let vocabulary = AttributeVocabulary::from_truth_table([a].iter());
        let unseen = truth(&[("chartreuse", AttributeKey::ClothesColor)]);
        let encoded = vocabulary.encode(&unseen);
        assert_eq!(encoded.iter().filter(|&&v| v == 1.0).count(), 13);
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let a = truth(&[]);
        let vocabulary = AttributeVocabulary::from_truth_table([a.clone()].iter());
        let model = ReferenceRetrievalModel::init(vocabulary, 16, 0.07, 3);
        let e = model.embed_image(&model.attribute_vocabulary.encode(&a));
        assert!((e.dot(&e).sqrt() - 1.0).abs() < 1e-9);
        let t = model.embed_text("a woman with a red shirt");
        assert!((t.dot(&t).sqrt() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bag_of_words_counts_tokens() {
        let bow = hashed_bag_of_words("Red red SHIRT.");
        assert_eq!(bow[token_bucket("red")], 2.0);
        assert_eq!(bow[token_bucket("shirt")], 1.0);
        assert_eq!(bow.sum(), 3.0);
    }

    #[test]
    fn model_round_trips_through_json() {
        let a = truth(&[]);
        let vocabulary = AttributeVocabulary::from_truth_table([a].iter());
        let model = ReferenceRetrievalModel::init(vocabulary, 8, 0.07, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = ReferenceRetrievalModel::load(&path).unwrap();
        assert_eq!(loaded, model);
    }

    #[test]
    fn init_is_deterministic_in_the_seed() {
        let a = truth(&[]);
        let vocabulary = AttributeVocabulary::from_truth_table([a].iter());
        let m1 = ReferenceRetrievalModel::init(vocabulary.clone(), 8, 0.07, 5);
        let m2 = ReferenceRetrievalModel::init(vocabulary, 8, 0.07, 5);
        assert_eq!(m1, m2);
    }
}
