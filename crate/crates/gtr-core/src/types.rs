//! Shared domain vocabulary: attribute schema, corpus records, caption records.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ConfidenceScore;

/// Lowest confidence an attribute answer may carry after clamping.
///
/// The caption confidence is a product of all per-attribute confidences, so an
/// exact zero anywhere would collapse it; extraction clamps to this floor.
pub const CONFIDENCE_FLOOR: f64 = 1e-6;

/// The closed set of person attributes, one per instruction prompt.
///
/// Variants are listed in prompt order; that order is canonical everywhere an
/// ordered traversal of the attributes is needed (extraction, persistence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKey {
    ClothesColor,
    ClothesStyle,
    PantsColor,
    PantsStyle,
    ShoesColor,
    ShoesStyle,
    Gender,
    HairColor,
    HairLength,
    Glasses,
    Phone,
    Umbrella,
    Bike,
    Bag,
}

impl AttributeKey {
    /// All 14 keys in prompt order.
    pub const ALL: [AttributeKey; 14] = [
        AttributeKey::ClothesColor,
        AttributeKey::ClothesStyle,
        AttributeKey::PantsColor,
        AttributeKey::PantsStyle,
        AttributeKey::ShoesColor,
        AttributeKey::ShoesStyle,
        AttributeKey::Gender,
        AttributeKey::HairColor,
        AttributeKey::HairLength,
        AttributeKey::Glasses,
        AttributeKey::Phone,
        AttributeKey::Umbrella,
        AttributeKey::Bike,
        AttributeKey::Bag,
    ];

    /// Fixed attributes always rendered in the first template sentence.
    pub const FIXED: [AttributeKey; 9] = [
        AttributeKey::ClothesColor,
        AttributeKey::ClothesStyle,
        AttributeKey::PantsColor,
        AttributeKey::PantsStyle,
        AttributeKey::ShoesColor,
        AttributeKey::ShoesStyle,
        AttributeKey::Gender,
        AttributeKey::HairColor,
        AttributeKey::HairLength,
    ];

    /// Variable attributes whose presence is decided per image.
    pub const VARIABLE: [AttributeKey; 5] = [
        AttributeKey::Glasses,
        AttributeKey::Phone,
        AttributeKey::Umbrella,
        AttributeKey::Bike,
        AttributeKey::Bag,
    ];

    /// Whether this key belongs to the variable (present/absent) partition.
    pub fn is_variable(self) -> bool {
        Self::VARIABLE.contains(&self)
    }

    /// Whether the key's answer is a yes/no question.
    ///
    /// Covers the variable keys plus hair length, whose prompt is yes/no but
    /// which renders as "long"/"short" rather than present/absent.
    pub fn is_boolean(self) -> bool {
        self.is_variable() || self == AttributeKey::HairLength
    }

    /// Snake-case name used in file formats.
    pub fn name(self) -> &'static str {
        match self {
            AttributeKey::ClothesColor => "clothes_color",
            AttributeKey::ClothesStyle => "clothes_style",
            AttributeKey::PantsColor => "pants_color",
            AttributeKey::PantsStyle => "pants_style",
            AttributeKey::ShoesColor => "shoes_color",
            AttributeKey::ShoesStyle => "shoes_style",
            AttributeKey::Gender => "gender",
            AttributeKey::HairColor => "hair_color",
            AttributeKey::HairLength => "hair_length",
            AttributeKey::Glasses => "glasses",
            AttributeKey::Phone => "phone",
            AttributeKey::Umbrella => "umbrella",
            AttributeKey::Bike => "bike",
            AttributeKey::Bag => "bag",
        }
    }

    /// The two tokens a boolean key may take, `(yes_token, no_token)`.
    pub fn boolean_tokens(self) -> Option<(&'static str, &'static str)> {
        if self == AttributeKey::HairLength {
            Some(("long", "short"))
        } else if self.is_variable() {
            Some(("present", "absent"))
        } else {
            None
        }
    }
}

impl std::fmt::Display for AttributeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One answered prompt: the raw backend answer, its normalized value and the
/// backend confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAnswer {
    pub key: AttributeKey,
    pub raw_answer: String,
    /// Normalized token: lowercased free text for color/style/gender keys,
    /// `present`/`absent` for variable keys, `long`/`short` for hair length.
    pub value: String,
    /// Confidence in `(0, 1]`, clamped to `[CONFIDENCE_FLOOR, 1]` at extraction.
    pub confidence: f64,
}

/// The complete 14-answer profile of one image, in prompt order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub image_id: String,
    pub answers: Vec<AttributeAnswer>,
}

impl AttributeSet {
    /// Look up the answer for a key.
    pub fn answer(&self, key: AttributeKey) -> Option<&AttributeAnswer> {
        self.answers.iter().find(|a| a.key == key)
    }

    /// Normalized value for a key; panics if the set is invalid.
    pub fn value(&self, key: AttributeKey) -> &str {
        &self
            .answer(key)
            .unwrap_or_else(|| panic!("attribute set missing key {key}"))
            .value
    }

    /// True when a boolean key carries its affirmative token.
    pub fn is_present(&self, key: AttributeKey) -> bool {
        match key.boolean_tokens() {
            Some((yes, _)) => self.answer(key).map(|a| a.value == yes).unwrap_or(false),
            None => false,
        }
    }
}

/// Errors raised while validating an [`AttributeSet`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributeSetError {
    #[error("missing attribute key {0}")]
    MissingKey(AttributeKey),
    #[error("duplicate attribute key {0}")]
    DuplicateKey(AttributeKey),
    #[error("confidence {confidence} out of range (0, 1] for key {key}")]
    ConfidenceOutOfRange { key: AttributeKey, confidence: f64 },
    #[error("invalid value {value:?} for key {key}")]
    InvalidValue { key: AttributeKey, value: String },
}

/// Check the full set of invariants and hand the set back unchanged.
///
/// All 14 keys must appear exactly once, confidences must lie in `(0, 1]` and
/// boolean keys must carry one of their two tokens.
pub fn validate_attribute_set(set: AttributeSet) -> Result<AttributeSet, AttributeSetError> {
    for key in AttributeKey::ALL {
        let mut hits = set.answers.iter().filter(|a| a.key == key);
        let first = hits.next().ok_or(AttributeSetError::MissingKey(key))?;
        if hits.next().is_some() {
            return Err(AttributeSetError::DuplicateKey(key));
        }
        if !first.confidence.is_finite() || first.confidence <= 0.0 || first.confidence > 1.0 {
            return Err(AttributeSetError::ConfidenceOutOfRange {
                key,
                confidence: first.confidence,
            });
        }
        if let Some((yes, no)) = key.boolean_tokens() {
            if first.value != yes && first.value != no {
                return Err(AttributeSetError::InvalidValue {
                    key,
                    value: first.value.clone(),
                });
            }
        } else if first.value.is_empty() {
            return Err(AttributeSetError::InvalidValue {
                key,
                value: first.value.clone(),
            });
        }
    }
    Ok(set)
}

/// Dataset split a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Val => f.write_str("val"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// One person image in a corpus. Images are opaque handles here; backends
/// decide what to do with the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub path: String,
    pub identity_id: String,
    pub split: Split,
}

/// One free-form person description from a text corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    pub text_id: String,
    pub text: String,
}

/// Which conversion route produced a pseudo caption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Template,
    Lm,
}

/// A generated pseudo caption with its aggregate confidence and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoCaption {
    pub image_id: String,
    /// Final text: the attribute description, concatenated with `ic_caption`
    /// when the latter is non-empty.
    pub text: String,
    pub confidence: ConfidenceScore,
    pub source: CaptionSource,
    /// Coupled image-captioning description; may be empty.
    pub ic_caption: String,
    pub attribute_set: AttributeSet,
}
