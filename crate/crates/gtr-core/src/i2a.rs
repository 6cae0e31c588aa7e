//! Image-to-attributes extraction: run the 14 instruction prompts through a
//! pluggable VQA backend, normalize the answers and record confidences.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::seed::derive_seed_bytes;
use crate::types::{
    validate_attribute_set, AttributeAnswer, AttributeKey, AttributeSet, AttributeSetError,
    ImageRecord, CONFIDENCE_FLOOR,
};

/// One instruction prompt: the question asked for one attribute key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstructionPrompt {
    pub key: AttributeKey,
    pub question: &'static str,
}

/// The 14 instruction prompts, in canonical order.
pub fn builtin_prompt_set() -> [InstructionPrompt; 14] {
    [
        InstructionPrompt {
            key: AttributeKey::ClothesColor,
            question: "What is the color of the clothes?",
        },
        InstructionPrompt {
            key: AttributeKey::ClothesStyle,
            question: "What is the style of the clothes?",
        },
        InstructionPrompt {
            key: AttributeKey::PantsColor,
            question: "What is the color of the pants?",
        },
        InstructionPrompt {
            key: AttributeKey::PantsStyle,
            question: "What is the style of the pants?",
        },
        InstructionPrompt {
            key: AttributeKey::ShoesColor,
            question: "What is the color of the shoes?",
        },
        InstructionPrompt {
            key: AttributeKey::ShoesStyle,
            question: "What is the style of the shoes?",
        },
        InstructionPrompt {
            key: AttributeKey::Gender,
            question: "What is the gender of the person?",
        },
        InstructionPrompt {
            key: AttributeKey::HairColor,
            question: "What is the color of the hair?",
        },
        InstructionPrompt {
            key: AttributeKey::HairLength,
            question: "Is the person with long hair?",
        },
        InstructionPrompt {
            key: AttributeKey::Glasses,
            question: "Is the person wearing glasses?",
        },
        InstructionPrompt {
            key: AttributeKey::Phone,
            question: "Is the person holding a mobile phone?",
        },
        InstructionPrompt {
            key: AttributeKey::Umbrella,
            question: "Is the person holding an umbrella?",
        },
        InstructionPrompt {
            key: AttributeKey::Bike,
            question: "Is the person riding a bike?",
        },
        InstructionPrompt {
            key: AttributeKey::Bag,
            question: "Is the person carrying a bag?",
        },
    ]
}

/// A raw backend answer with the backend's confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct VqaResponse {
    pub raw_answer: String,
    pub confidence: f64,
}

/// Errors raised while extracting attributes.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum I2aError {
    #[error("backend failure{}: {message}", key.map(|k| format!(" on prompt {k}")).unwrap_or_default())]
    BackendFailure {
        key: Option<AttributeKey>,
        message: String,
    },
    #[error("unparseable answer {raw:?} for key {key}")]
    UnparseableAnswer { key: AttributeKey, raw: String },
    #[error("image {image_id:?} not in the oracle truth table")]
    UnknownImage { image_id: String },
    #[error(transparent)]
    InvalidSet(#[from] AttributeSetError),
}

/// A visual question answering backend.
///
/// Implementations must be deterministic for a fixed backend state and seed.
pub trait VqaBackend {
    fn answer(&self, image: &ImageRecord, question: &str) -> Result<VqaResponse, I2aError>;
    /// Coupled whole-image description used to enrich the final caption.
    fn caption(&self, image: &ImageRecord) -> Result<String, I2aError>;
}

/// Normalize a raw answer for a key.
///
/// Boolean keys accept answers beginning with yes/no (case-insensitive) and
/// map them to the key's token pair; every other key lowercases and trims.
pub fn normalize_answer(key: AttributeKey, raw: &str) -> Result<String, I2aError> {
    let lowered = raw.trim().to_lowercase();
    match key.boolean_tokens() {
        Some((yes, no)) => {
            if lowered.starts_with("yes") {
                Ok(yes.to_string())
            } else if lowered.starts_with("no") {
                Ok(no.to_string())
            } else {
                Err(I2aError::UnparseableAnswer {
                    key,
                    raw: raw.to_string(),
                })
            }
        }
        None => {
            if lowered.is_empty() {
                Err(I2aError::UnparseableAnswer {
                    key,
                    raw: raw.to_string(),
                })
            } else {
                Ok(lowered)
            }
        }
    }
}

/// Ask the backend all 14 prompts and assemble a validated attribute set.
///
/// Confidences are clamped to `[CONFIDENCE_FLOOR, 1]`; any backend failure
/// aborts the whole image since the aggregate confidence needs all 14 answers.
pub fn extract_attributes(
    image: &ImageRecord,
    backend: &dyn VqaBackend,
) -> Result<AttributeSet, I2aError> {
    let mut answers = Vec::with_capacity(14);
    for prompt in builtin_prompt_set() {
        let response = backend.answer(image, prompt.question).map_err(|e| match e {
            I2aError::BackendFailure { key: None, message } => I2aError::BackendFailure {
                key: Some(prompt.key),
                message,
            },
            other => other,
        })?;
        if !response.confidence.is_finite() {
            return Err(I2aError::BackendFailure {
                key: Some(prompt.key),
                message: format!("non-finite confidence {}", response.confidence),
            });
        }
        let value = normalize_answer(prompt.key, &response.raw_answer)?;
        answers.push(AttributeAnswer {
            key: prompt.key,
            raw_answer: response.raw_answer,
            value,
            confidence: response.confidence.clamp(CONFIDENCE_FLOOR, 1.0),
        });
    }
    let set = AttributeSet {
        image_id: image.image_id.clone(),
        answers,
    };
    Ok(validate_attribute_set(set)?)
}

/// Ground-truth attribute values for one image: normalized token per key.
pub type GroundTruth = BTreeMap<AttributeKey, String>;

/// Configuration of the deterministic mock VQA oracle.
///
/// The oracle answers from a truth table, flipping each answer independently
/// with `flip_probability` and drawing confidences from one of two uniform
/// intervals depending on whether the answer was flipped.
#[derive(Debug, Clone)]
pub struct MockOracleConfig {
    pub truth_table: BTreeMap<String, GroundTruth>,
    pub flip_probability: f64,
    /// `(lo, hi)` confidence interval for unflipped answers.
    pub confidence_law_correct: (f64, f64),
    /// `(lo, hi)` confidence interval for flipped answers.
    pub confidence_law_flipped: (f64, f64),
    pub seed: u64,
}

impl MockOracleConfig {
    /// Noise-free oracle: answers are the truth with confidence exactly 1.
    pub fn noiseless(truth_table: BTreeMap<String, GroundTruth>, seed: u64) -> Self {
        MockOracleConfig {
            truth_table,
            flip_probability: 0.0,
            confidence_law_correct: (1.0, 1.0),
            confidence_law_flipped: (1.0, 1.0),
            seed,
        }
    }

    /// Distinct values observed for a key across the whole truth table.
    fn value_vocabulary(&self, key: AttributeKey) -> BTreeSet<&str> {
        self.truth_table
            .values()
            .filter_map(|truth| truth.get(&key))
            .map(String::as_str)
            .collect()
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + rng.gen::<f64>() * (hi - lo)
}

/// Convert a normalized truth token into the raw answer the backend would say.
fn raw_answer_for(key: AttributeKey, token: &str) -> String {
    match key.boolean_tokens() {
        Some((yes, _)) => {
            if token == yes {
                "yes".to_string()
            } else {
                "no".to_string()
            }
        }
        None => token.to_string(),
    }
}

fn negate_token(key: AttributeKey, token: &str) -> String {
    let (yes, no) = key
        .boolean_tokens()
        .expect("negation only applies to boolean keys");
    if token == yes {
        no.to_string()
    } else {
        yes.to_string()
    }
}

/// Answer one prompt from the truth table with seeded flip noise.
///
/// Randomness derives from `(seed, image_id, key)` only, so results are
/// identical no matter in which order images and prompts are queried.
pub fn mock_oracle_answer(
    config: &MockOracleConfig,
    image_id: &str,
    prompt: InstructionPrompt,
) -> Result<VqaResponse, I2aError> {
    let truth = config
        .truth_table
        .get(image_id)
        .ok_or_else(|| I2aError::UnknownImage {
            image_id: image_id.to_string(),
        })?;
    let true_token = truth.get(&prompt.key).ok_or_else(|| I2aError::BackendFailure {
        key: Some(prompt.key),
        message: format!("truth table entry for {image_id:?} lacks key {}", prompt.key),
    })?;

    let seed = derive_seed_bytes(config.seed, &["mock-oracle", image_id, prompt.key.name()]);
    let mut rng = ChaCha8Rng::from_seed(seed);

    let flip = rng.gen::<f64>() < config.flip_probability;
    let (token, law) = if flip {
        if prompt.key.is_boolean() {
            (negate_token(prompt.key, true_token), config.confidence_law_flipped)
        } else {
            // Corruptions stay in-distribution: draw a wrong token from the
            // values this key actually takes in the truth table.
            let vocabulary: Vec<&str> = config
                .value_vocabulary(prompt.key)
                .into_iter()
                .filter(|t| t != &true_token.as_str())
                .collect();
            if vocabulary.is_empty() {
                // Nothing to corrupt with; answer truthfully.
                (true_token.clone(), config.confidence_law_correct)
            } else {
                let pick = rng.gen_range(0..vocabulary.len());
                (vocabulary[pick].to_string(), config.confidence_law_flipped)
            }
        }
    } else {
        (true_token.clone(), config.confidence_law_correct)
    };

    Ok(VqaResponse {
        raw_answer: raw_answer_for(prompt.key, &token),
        confidence: uniform_in(&mut rng, law),
    })
}

/// The mock oracle as a [`VqaBackend`].
#[derive(Debug, Clone)]
pub struct MockOracle {
    config: MockOracleConfig,
}

impl MockOracle {
    pub fn new(config: MockOracleConfig) -> Self {
        MockOracle { config }
    }

    pub fn config(&self) -> &MockOracleConfig {
        &self.config
    }
}

impl VqaBackend for MockOracle {
    fn answer(&self, image: &ImageRecord, question: &str) -> Result<VqaResponse, I2aError> {
        let prompt = builtin_prompt_set()
            .into_iter()
            .find(|p| p.question == question)
            .ok_or_else(|| I2aError::BackendFailure {
                key: None,
                message: format!("unknown question {question:?}"),
            })?;
        mock_oracle_answer(&self.config, &image.image_id, prompt)
    }

    /// Deterministic coupled description. It reuses the oracle's own answers
    /// for the garment prompts, so its perception errors are consistent with
    /// the extraction noise. Captions carry no confidence; only the 14 prompt
    /// answers enter the aggregate.
    fn caption(&self, image: &ImageRecord) -> Result<String, I2aError> {
        let prompts = builtin_prompt_set();
        let mut get = |key: AttributeKey| -> Result<String, I2aError> {
            let prompt = prompts
                .iter()
                .find(|p| p.key == key)
                .copied()
                .expect("every key has a prompt");
            let response = mock_oracle_answer(&self.config, &image.image_id, prompt)?;
            normalize_answer(key, &response.raw_answer)
        };
        Ok(format!(
            "a person wearing {} {} and {} {}",
            get(AttributeKey::ClothesColor)?,
            get(AttributeKey::ClothesStyle)?,
            get(AttributeKey::PantsColor)?,
            get(AttributeKey::PantsStyle)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Split;

    pub(crate) fn sample_truth() -> GroundTruth {
        crate::types::tests::sample_set()
            .answers
            .iter()
            .map(|a| (a.key, a.value.clone()))
            .collect()
    }

    fn image(id: &str) -> ImageRecord {
        ImageRecord {
            image_id: id.to_string(),
            path: format!("images/{id}.jpg"),
            identity_id: "pid_1".to_string(),
            split: Split::Train,
        }
    }

    fn single_image_config(flip_probability: f64) -> MockOracleConfig {
        let mut truth_table = BTreeMap::new();
        truth_table.insert("img_0001".to_string(), sample_truth());
        MockOracleConfig {
            truth_table,
            flip_probability,
            confidence_law_correct: (0.8, 1.0),
            confidence_law_flipped: (0.2, 0.6),
            seed: 11,
        }
    }

    #[test]
    fn prompt_set_is_the_appendix_listing() {
        let prompts = builtin_prompt_set();
        assert_eq!(prompts.len(), 14);
        assert_eq!(prompts[0].question, "What is the color of the clothes?");
        assert_eq!(prompts[13].question, "Is the person carrying a bag?");
        for (prompt, key) in prompts.iter().zip(AttributeKey::ALL) {
            assert_eq!(prompt.key, key);
        }
    }

    #[test]
    fn normalize_boolean_answers() {
        assert_eq!(normalize_answer(AttributeKey::Bag, "Yes").unwrap(), "present");
        assert_eq!(normalize_answer(AttributeKey::Bag, "no").unwrap(), "absent");
        assert_eq!(
            normalize_answer(AttributeKey::HairLength, "Yes, quite long").unwrap(),
            "long"
        );
        assert_eq!(normalize_answer(AttributeKey::HairLength, "No").unwrap(), "short");
    }

    #[test]
    fn normalize_trims_and_lowercases_free_text() {
        assert_eq!(
            normalize_answer(AttributeKey::ClothesColor, "  Red ").unwrap(),
            "red"
        );
    }

    #[test]
    fn normalize_rejects_non_boolean_text_for_boolean_keys() {
        assert!(matches!(
            normalize_answer(AttributeKey::Glasses, "maybe"),
            Err(I2aError::UnparseableAnswer { key: AttributeKey::Glasses, .. })
        ));
    }

    #[test]
    fn normalize_rejects_empty_answers() {
        assert!(normalize_answer(AttributeKey::ClothesColor, "   ").is_err());
        assert!(normalize_answer(AttributeKey::Bag, "").is_err());
    }

    #[test]
    fn noiseless_oracle_reproduces_truth_exactly() {
        let mut truth_table = BTreeMap::new();
        truth_table.insert("img_0001".to_string(), sample_truth());
        let oracle = MockOracle::new(MockOracleConfig::noiseless(truth_table, 5));
        let set = extract_attributes(&image("img_0001"), &oracle).unwrap();
        for answer in &set.answers {
            assert_eq!(&answer.value, sample_truth().get(&answer.key).unwrap());
            assert_eq!(answer.confidence, 1.0);
        }
    }

    #[test]
    fn oracle_is_deterministic_per_call() {
        let config = single_image_config(0.5);
        for prompt in builtin_prompt_set() {
            let a = mock_oracle_answer(&config, "img_0001", prompt).unwrap();
            let b = mock_oracle_answer(&config, "img_0001", prompt).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_image_is_an_error() {
        let config = single_image_config(0.0);
        let err = mock_oracle_answer(&config, "img_missing", builtin_prompt_set()[0]).unwrap_err();
        assert!(matches!(err, I2aError::UnknownImage { .. }));
    }

    #[test]
    fn certain_flip_negates_every_boolean_key() {
        let config = single_image_config(1.0);
        let oracle = MockOracle::new(config);
        let set = extract_attributes(&image("img_0001"), &oracle).unwrap();
        let truth = sample_truth();
        for key in AttributeKey::ALL {
            if key.is_boolean() {
                let expected = negate_token(key, truth.get(&key).unwrap());
                assert_eq!(set.value(key), expected, "key {key} not negated");
            }
        }
    }

    #[test]
    fn empirical_flip_rate_matches_probability() {
        // Monte Carlo over 10,000 boolean draws: flips always change the token.
        let mut truth_table = BTreeMap::new();
        for i in 0..2000 {
            truth_table.insert(format!("img_{i:05}"), sample_truth());
        }
        let config = MockOracleConfig {
            truth_table,
            flip_probability: 0.3,
            confidence_law_correct: (0.8, 1.0),
            confidence_law_flipped: (0.2, 0.6),
            seed: 99,
        };
        let truth = sample_truth();
        let boolean_prompts: Vec<_> = builtin_prompt_set()
            .into_iter()
            .filter(|p| p.key.is_boolean())
            .collect();
        let mut draws = 0usize;
        let mut flips = 0usize;
        'outer: for i in 0..2000 {
            let id = format!("img_{i:05}");
            for prompt in &boolean_prompts {
                let response = mock_oracle_answer(&config, &id, *prompt).unwrap();
                let value = normalize_answer(prompt.key, &response.raw_answer).unwrap();
                if &value != truth.get(&prompt.key).unwrap() {
                    flips += 1;
                }
                draws += 1;
                if draws == 10_000 {
                    break 'outer;
                }
            }
        }
        assert_eq!(draws, 10_000);
        let rate = flips as f64 / draws as f64;
        assert!((rate - 0.3).abs() <= 0.02, "flip rate {rate}");
    }

    #[test]
    fn zero_confidence_is_clamped_to_the_floor() {
        struct ZeroConfidence;
        impl VqaBackend for ZeroConfidence {
            fn answer(&self, _: &ImageRecord, question: &str) -> Result<VqaResponse, I2aError> {
                let raw = if question.starts_with("Is ") { "yes" } else { "gray" };
                Ok(VqaResponse {
                    raw_answer: raw.to_string(),
                    confidence: 0.0,
                })
            }
            fn caption(&self, _: &ImageRecord) -> Result<String, I2aError> {
                Ok(String::new())
            }
        }
        let set = extract_attributes(&image("img_0001"), &ZeroConfidence).unwrap();
        for answer in &set.answers {
            assert_eq!(answer.confidence, CONFIDENCE_FLOOR);
        }
    }

    #[test]
    fn flipped_text_answers_come_from_the_observed_vocabulary() {
        let mut truth_table = BTreeMap::new();
        let mut a = sample_truth();
        a.insert(AttributeKey::ClothesColor, "red".to_string());
        truth_table.insert("img_a".to_string(), a);
        let mut b = sample_truth();
        b.insert(AttributeKey::ClothesColor, "blue".to_string());
        truth_table.insert("img_b".to_string(), b);
        let mut c = sample_truth();
        c.insert(AttributeKey::ClothesColor, "green".to_string());
        truth_table.insert("img_c".to_string(), c);

        let config = MockOracleConfig {
            truth_table,
            flip_probability: 1.0,
            confidence_law_correct: (1.0, 1.0),
            confidence_law_flipped: (0.5, 0.5),
            seed: 3,
        };
        let prompt = builtin_prompt_set()[0];
        let response = mock_oracle_answer(&config, "img_a", prompt).unwrap();
        assert_ne!(response.raw_answer, "red");
        assert!(["blue", "green"].contains(&response.raw_answer.as_str()));
        assert_eq!(response.confidence, 0.5);
    }
}
