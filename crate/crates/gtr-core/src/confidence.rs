//! Caption confidence: aggregate the 14 per-attribute confidences into one
//! score and expose the beta-weighting every confidence-scored loss applies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AttributeKey, AttributeSet, CONFIDENCE_FLOOR};

/// A caption confidence in `(0, 1]`.
///
/// The log is the canonical representation: a product of 14 confidences near
/// the clamp floor underflows long before its log does, and beta-exponentiation
/// is a single multiply in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub value: f64,
    pub log_value: f64,
}

impl ConfidenceScore {
    /// Build from a plain probability in `(0, 1]`.
    pub fn from_value(value: f64) -> Result<Self, ConfidenceError> {
        if !value.is_finite() || value <= 0.0 || value > 1.0 {
            return Err(ConfidenceError::OutOfRange { key: None, value });
        }
        Ok(ConfidenceScore {
            value,
            log_value: value.ln(),
        })
    }

    /// Build from a log-probability `<= 0`.
    pub fn from_log(log_value: f64) -> Result<Self, ConfidenceError> {
        if !log_value.is_finite() || log_value > 0.0 {
            return Err(ConfidenceError::OutOfRange {
                key: None,
                value: log_value.exp(),
            });
        }
        Ok(ConfidenceScore {
            value: log_value.exp(),
            log_value,
        })
    }

    /// Exact score for a fully confident caption.
    pub fn one() -> Self {
        ConfidenceScore {
            value: 1.0,
            log_value: 0.0,
        }
    }
}

/// The hyper-parameter weighting how strongly confidence modulates a loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWeight(f64);

impl BetaWeight {
    pub fn new(beta: f64) -> Result<Self, ConfidenceError> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(ConfidenceError::InvalidBeta(beta));
        }
        Ok(BetaWeight(beta))
    }

    /// Beta = 0: every weight degenerates to 1 and confidence is ignored.
    pub fn zero() -> Self {
        BetaWeight(0.0)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfidenceError {
    #[error("confidence {value} out of range (0, 1]{}", key.map(|k| format!(" for key {k}")).unwrap_or_default())]
    OutOfRange { key: Option<AttributeKey>, value: f64 },
    #[error("beta {0} must be finite and non-negative")]
    InvalidBeta(f64),
}

/// Joint confidence of a caption: the product of all 14 attribute confidences,
/// accumulated in log space.
///
/// Expects every per-attribute confidence to sit in `[CONFIDENCE_FLOOR, 1]`,
/// which extraction guarantees by clamping.
pub fn aggregate_confidence(set: &AttributeSet) -> Result<ConfidenceScore, ConfidenceError> {
    let mut log_sum = 0.0;
    for answer in &set.answers {
        let c = answer.confidence;
        if !c.is_finite() || c < CONFIDENCE_FLOOR || c > 1.0 {
            return Err(ConfidenceError::OutOfRange {
                key: Some(answer.key),
                value: c,
            });
        }
        log_sum += c.ln();
    }
    ConfidenceScore::from_log(log_sum)
}

/// The per-sample loss weight `C^beta`, computed as `exp(beta * ln C)`.
///
/// Exactly 1 at beta = 0 and at C = 1.
pub fn apply_beta(confidence: ConfidenceScore, beta: BetaWeight) -> f64 {
    (beta.get() * confidence.log_value).exp()
}
