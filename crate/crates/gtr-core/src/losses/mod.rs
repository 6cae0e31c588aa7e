//! Confidence-score-based training objectives with analytic gradients.
//!
//! Each loss weights a sample's contribution by `C^beta`, the caption
//! confidence raised to the configured exponent; at beta = 0 every loss
//! degenerates into its vanilla form.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::confidence::{apply_beta, BetaWeight, ConfidenceScore};

mod id;
mod irr;
mod itc;
mod itm;
mod sdm;

pub use id::{cs_id_loss, IdLoss};
pub use irr::{cs_irr_loss, IrrLoss};
pub use itc::{cs_itc_loss, ItcLoss};
pub use itm::{cs_itm_loss, ItmLoss};
pub use sdm::{cs_sdm_loss, SdmLoss};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("no negative candidate: all batch items share one identity")]
    NoNegativeAvailable,
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
}

/// Tolerance on the unit-norm row invariant of embedding matrices.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A mini-batch of paired image/text embeddings with per-pair confidences.
///
/// Row `i` of the image matrix pairs with row `i` of the text matrix; the
/// confidence of a pair is the confidence of its generated text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub image_embeddings: Array2<f64>,
    pub text_embeddings: Array2<f64>,
    pub confidences: Vec<f64>,
    pub identity_labels: Vec<String>,
    pub temperature: f64,
    pub beta: BetaWeight,
}

impl TrainingBatch {
    pub fn new(
        image_embeddings: Array2<f64>,
        text_embeddings: Array2<f64>,
        confidences: Vec<f64>,
        identity_labels: Vec<String>,
        temperature: f64,
        beta: BetaWeight,
    ) -> Result<Self, LossError> {
        let m = image_embeddings.nrows();
        if text_embeddings.nrows() != m
            || confidences.len() != m
            || identity_labels.len() != m
        {
            return Err(LossError::InvalidBatch(format!(
                "row counts disagree: images {m}, texts {}, confidences {}, labels {}",
                text_embeddings.nrows(),
                confidences.len(),
                identity_labels.len()
            )));
        }
        if image_embeddings.ncols() != text_embeddings.ncols() {
            return Err(LossError::InvalidBatch(format!(
                "embedding widths disagree: {} vs {}",
                image_embeddings.ncols(),
                text_embeddings.ncols()
            )));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(LossError::InvalidBatch(format!(
                "temperature {temperature} must be positive"
            )));
        }
        for (name, matrix) in [("image", &image_embeddings), ("text", &text_embeddings)] {
            for (i, row) in matrix.rows().into_iter().enumerate() {
                let norm = row.dot(&row).sqrt();
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(LossError::InvalidBatch(format!(
                        "{name} row {i} has norm {norm}, expected 1"
                    )));
                }
            }
        }
        for (i, &c) in confidences.iter().enumerate() {
            if !(c.is_finite() && c > 0.0 && c <= 1.0) {
                return Err(LossError::InvalidBatch(format!(
                    "confidence {c} at row {i} out of (0, 1]"
                )));
            }
        }
        Ok(TrainingBatch {
            image_embeddings,
            text_embeddings,
            confidences,
            identity_labels,
            temperature,
            beta,
        })
    }

    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }
}

/// Pair-classification batch for the matching loss: two-way logits per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ItmBatch {
    /// `K x 2` logits; column 1 is the "matched" class.
    pub pair_scores: Array2<f64>,
    /// `K x 2` one-hot rows: `[0, 1]` positive, `[1, 0]` negative.
    pub labels: Array2<f64>,
    pub confidences: Vec<f64>,
    pub beta: BetaWeight,
}

impl ItmBatch {
    pub fn new(
        pair_scores: Array2<f64>,
        labels: Array2<f64>,
        confidences: Vec<f64>,
        beta: BetaWeight,
    ) -> Result<Self, LossError> {
        let k = pair_scores.nrows();
        if k == 0 {
            return Err(LossError::DegenerateBatch("no pairs".to_string()));
        }
        if pair_scores.ncols() != 2 || labels.ncols() != 2 || labels.nrows() != k {
            return Err(LossError::InvalidBatch(format!(
                "expected K x 2 scores and labels, got {:?} and {:?}",
                pair_scores.dim(),
                labels.dim()
            )));
        }
        if confidences.len() != k {
            return Err(LossError::InvalidBatch(format!(
                "{} confidences for {k} pairs",
                confidences.len()
            )));
        }
        for (i, row) in labels.rows().into_iter().enumerate() {
            let one_hot = (row[0] == 0.0 && row[1] == 1.0) || (row[0] == 1.0 && row[1] == 0.0);
            if !one_hot {
                return Err(LossError::InvalidBatch(format!(
                    "label row {i} is not one-hot: {row:?}"
                )));
            }
        }
        Ok(ItmBatch {
            pair_scores,
            labels,
            confidences,
            beta,
        })
    }
}

/// Masked-token prediction inputs for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrText {
    /// `|M_t| x |V|` logits over the vocabulary at each masked position.
    pub logits: Array2<f64>,
    /// One-hot targets, same shape.
    pub targets: Array2<f64>,
    pub confidence: f64,
}

/// Batch of masked-token prediction problems.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrBatch {
    pub texts: Vec<IrrText>,
    pub beta: BetaWeight,
}

impl IrrBatch {
    pub fn new(texts: Vec<IrrText>, beta: BetaWeight) -> Result<Self, LossError> {
        if texts.is_empty() {
            return Err(LossError::DegenerateBatch("no texts".to_string()));
        }
        let vocab = texts[0].logits.ncols();
        for (t, text) in texts.iter().enumerate() {
            if text.logits.nrows() == 0 {
                return Err(LossError::DegenerateBatch(format!(
                    "text {t} has no masked positions"
                )));
            }
            if text.logits.dim() != text.targets.dim() || text.logits.ncols() != vocab {
                return Err(LossError::InvalidBatch(format!(
                    "text {t}: logits {:?} vs targets {:?}, vocabulary {vocab}",
                    text.logits.dim(),
                    text.targets.dim()
                )));
            }
            for (i, row) in text.targets.rows().into_iter().enumerate() {
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != row.len() {
                    return Err(LossError::InvalidBatch(format!(
                        "text {t} target row {i} is not one-hot"
                    )));
                }
            }
        }
        Ok(IrrBatch { texts, beta })
    }
}

/// Identity-classification batch over both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct IdBatch {
    pub text_features: Array2<f64>,
    pub image_features: Array2<f64>,
    /// `M x d` classifier weights, one row per identity class.
    pub class_weights: Array2<f64>,
    pub biases: Array1<f64>,
    /// `N x M` one-hot class labels.
    pub labels: Array2<f64>,
    pub confidences: Vec<f64>,
    pub beta: BetaWeight,
}

impl IdBatch {
    pub fn new(
        text_features: Array2<f64>,
        image_features: Array2<f64>,
        class_weights: Array2<f64>,
        biases: Array1<f64>,
        labels: Array2<f64>,
        confidences: Vec<f64>,
        beta: BetaWeight,
    ) -> Result<Self, LossError> {
        let n = text_features.nrows();
        let m = class_weights.nrows();
        let d = class_weights.ncols();
        if n == 0 {
            return Err(LossError::DegenerateBatch("no samples".to_string()));
        }
        if m < 2 {
            return Err(LossError::DegenerateBatch(format!(
                "{m} classes, need at least 2"
            )));
        }
        if image_features.dim() != (n, d) || text_features.ncols() != d {
            return Err(LossError::InvalidBatch(format!(
                "feature shapes {:?}/{:?} incompatible with weights {:?}",
                text_features.dim(),
                image_features.dim(),
                class_weights.dim()
            )));
        }
        if biases.len() != m || labels.dim() != (n, m) || confidences.len() != n {
            return Err(LossError::InvalidBatch(
                "bias/label/confidence shapes disagree with N x M".to_string(),
            ));
        }
        for (i, row) in labels.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(LossError::InvalidBatch(format!(
                    "label row {i} is not one-hot"
                )));
            }
        }
        Ok(IdBatch {
            text_features,
            image_features,
            class_weights,
            biases,
            labels,
            confidences,
            beta,
        })
    }
}

/// `C_i^beta` for every confidence in the slice.
pub(crate) fn beta_weights(confidences: &[f64], beta: BetaWeight) -> Vec<f64> {
    confidences
        .iter()
        .map(|&c| {
            let score = ConfidenceScore::from_value(c)
                .expect("batch validation guarantees confidences in (0, 1]");
            apply_beta(score, beta)
        })
        .collect()
}

/// Numerically stable log-softmax of a slice.
pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - max - log_sum).collect()
}

/// How a negative partner is drawn for each anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeStrategy {
    /// Uniform over all wrong-identity rows.
    Uniform,
    /// Highest-similarity wrong-identity row; ties break on the lowest index.
    Hard,
}

/// One matching pair referencing rows of the batch it was sampled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ItmPair {
    pub image_index: usize,
    pub text_index: usize,
    pub positive: bool,
    /// Confidence of the text in the pair.
    pub confidence: f64,
}

impl ItmPair {
    /// `[0, 1]` for positive pairs, `[1, 0]` for negatives.
    pub fn label(&self) -> [f64; 2] {
        if self.positive {
            [0.0, 1.0]
        } else {
            [1.0, 0.0]
        }
    }
}

/// Build the `3M` matching pairs for a batch: the M positives, one negative
/// text per image and one negative image per text.
pub fn sample_itm_pairs(
    batch: &TrainingBatch,
    strategy: NegativeStrategy,
    seed: u64,
) -> Result<Vec<ItmPair>, LossError> {
    let m = batch.len();
    if m < 2 {
        return Err(LossError::DegenerateBatch(format!(
            "need at least 2 rows to draw negatives, got {m}"
        )));
    }
    let wrong_identity: Vec<Vec<usize>> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| batch.identity_labels[j] != batch.identity_labels[i])
                .collect()
        })
        .collect();
    if wrong_identity.iter().any(|c| c.is_empty()) {
        return Err(LossError::NoNegativeAvailable);
    }

    let similarities = batch
        .image_embeddings
        .dot(&batch.text_embeddings.t());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |candidates: &[usize], score: &dyn Fn(usize) -> f64| -> usize {
        match strategy {
            NegativeStrategy::Uniform => candidates[rng.gen_range(0..candidates.len())],
            NegativeStrategy::Hard => {
                let mut best = candidates[0];
                for &j in &candidates[1..] {
                    if score(j) > score(best) {
                        best = j;
                    }
                }
                best
            }
        }
    };

    let mut pairs = Vec::with_capacity(3 * m);
    for i in 0..m {
        pairs.push(ItmPair {
            image_index: i,
            text_index: i,
            positive: true,
            confidence: batch.confidences[i],
        });
    }
    for i in 0..m {
        let j = draw(&wrong_identity[i], &|j| similarities[(i, j)]);
        pairs.push(ItmPair {
            image_index: i,
            text_index: j,
            positive: false,
            confidence: batch.confidences[j],
        });
    }
    for i in 0..m {
        let j = draw(&wrong_identity[i], &|j| similarities[(j, i)]);
        pairs.push(ItmPair {
            image_index: j,
            text_index: i,
            positive: false,
            confidence: batch.confidences[i],
        });
    }
    Ok(pairs)
}


#[cfg(test)]
mod tests {
    use super::test_support::random_batch;
    use super::*;
    use ndarray::array;

    #[test]
    fn batch_rejects_non_unit_rows() {
        let images = array![[1.0, 1.0]];
        let texts = array![[1.0, 0.0]];
        let err = TrainingBatch::new(
            images,
            texts,
            vec![1.0],
            vec!["a".to_string()],
            0.07,
            BetaWeight::zero(),
        )
        .unwrap_err();
        assert!(matches!(err, LossError::InvalidBatch(_)));
    }

    #[test]
    fn itm_pairs_have_the_3m_layout() {
        let batch = random_batch(1, 6, 8, 3);
        let pairs = sample_itm_pairs(&batch, NegativeStrategy::Uniform, 9).unwrap();
        assert_eq!(pairs.len(), 18);
        assert!(pairs[..6].iter().all(|p| p.positive));
        assert!(pairs[6..].iter().all(|p| !p.positive));
        for (i, p) in pairs[..6].iter().enumerate() {
            assert_eq!((p.image_index, p.text_index), (i, i));
            assert_eq!(p.confidence, batch.confidences[i]);
        }
        // Negatives never pair rows of the same identity.
        for p in &pairs[6..] {
            assert_ne!(
                batch.identity_labels[p.image_index],
                batch.identity_labels[p.text_index]
            );
        }
        // Confidence is the text's.
        for p in &pairs[6..] {
            assert_eq!(p.confidence, batch.confidences[p.text_index]);
        }
    }

    #[test]
    fn itm_sampling_is_deterministic_under_seed() {
        let batch = random_batch(2, 5, 4, 2);
        let a = sample_itm_pairs(&batch, NegativeStrategy::Uniform, 33).unwrap();
        let b = sample_itm_pairs(&batch, NegativeStrategy::Uniform, 33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_rows_force_the_single_other_candidate() {
        let batch = random_batch(3, 2, 4, 2);
        let pairs = sample_itm_pairs(&batch, NegativeStrategy::Uniform, 0).unwrap();
        assert_eq!(pairs.len(), 6);
        assert_eq!((pairs[2].image_index, pairs[2].text_index), (0, 1));
        assert_eq!((pairs[3].image_index, pairs[3].text_index), (1, 0));
        assert_eq!((pairs[4].image_index, pairs[4].text_index), (1, 0));
        assert_eq!((pairs[5].image_index, pairs[5].text_index), (0, 1));
    }

    #[test]
    fn single_identity_batch_has_no_negatives() {
        let batch = random_batch(4, 4, 4, 1);
        assert_eq!(
            sample_itm_pairs(&batch, NegativeStrategy::Uniform, 0).unwrap_err(),
            LossError::NoNegativeAvailable
        );
    }

    #[test]
    fn hard_strategy_picks_the_known_argmax() {
        // Craft embeddings whose similarity matrix is known in closed form.
        let images = array![
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let texts = array![
            [0.6, 0.8, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.8, 0.6],
        ];
        // similarities (image i, text j):
        //   i=0: 0.6 1.0 0.0
        //   i=1: 0.8 0.0 0.8
        //   i=2: 0.0 0.0 0.6
        let batch = TrainingBatch::new(
            images,
            texts,
            vec![0.9, 0.8, 0.7],
            vec!["a".to_string(), "b".to_string(), "c".to_string()],
            0.07,
            BetaWeight::zero(),
        )
        .unwrap();
        let pairs = sample_itm_pairs(&batch, NegativeStrategy::Hard, 0).unwrap();
        // Image 0's hardest wrong-identity text is 1 (sim 1.0).
        assert_eq!((pairs[3].image_index, pairs[3].text_index), (0, 1));
        // Image 1 ties texts 0 and 2 at 0.8; lowest index wins.
        assert_eq!((pairs[4].image_index, pairs[4].text_index), (1, 0));
        // Image 2's hardest is text 2 (its own column is the max but same id?
        // identities differ per row here, text 2 has id "c" == image 2 -> excluded,
        // so candidates are texts 0 (0.0) and 1 (0.0); tie -> index 0.
        assert_eq!((pairs[5].image_index, pairs[5].text_index), (2, 0));
    }
}
