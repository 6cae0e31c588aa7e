//! Confidence-weighted image-text matching loss.

use ndarray::Array2;

use super::{beta_weights, log_softmax, ItmBatch, LossError};

#[derive(Debug, Clone)]
pub struct ItmLoss {
    pub loss: f64,
    pub grad_pair_scores: Array2<f64>,
}

/// Two-way cross-entropy over match/no-match logits, each pair weighted by
/// the confidence of its text: `(1/K) sum_k C_k^beta CE(y_k, softmax(phi_k))`.
pub fn cs_itm_loss(batch: &ItmBatch) -> Result<ItmLoss, LossError> {
    let k = batch.pair_scores.nrows();
    if k == 0 {
        return Err(LossError::DegenerateBatch("no pairs".to_string()));
    }
    let weights = beta_weights(&batch.confidences, batch.beta);

    let mut loss = 0.0;
    let mut grad = Array2::<f64>::zeros((k, 2));
    for i in 0..k {
        let logits: Vec<f64> = batch.pair_scores.row(i).to_vec();
        let log_probs = log_softmax(&logits);
        for j in 0..2 {
            loss -= weights[i] * batch.labels[(i, j)] * log_probs[j];
            grad[(i, j)] = weights[i] / k as f64 * (log_probs[j].exp() - batch.labels[(i, j)]);
        }
    }
    loss /= k as f64;

    Ok(ItmLoss {
        loss,
        grad_pair_scores: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::BetaWeight;
    use crate::losses::test_support::{central_difference, gradient_error};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_itm_batch(seed: u64, k: usize, beta: f64) -> ItmBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scores = Array2::zeros((k, 2));
        let mut labels = Array2::zeros((k, 2));
        for i in 0..k {
            scores[(i, 0)] = rng.gen_range(-3.0..3.0);
            scores[(i, 1)] = rng.gen_range(-3.0..3.0);
            let positive = rng.gen_bool(0.5);
            labels[(i, if positive { 1 } else { 0 })] = 1.0;
        }
        let confidences = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        ItmBatch::new(scores, labels, confidences, BetaWeight::new(beta).unwrap()).unwrap()
    }

    #[test]
    fn confident_correct_prediction_has_negligible_loss() {
        let batch = ItmBatch::new(
            array![[-50.0, 50.0]],
            array![[0.0, 1.0]],
            vec![1.0],
            BetaWeight::new(0.8).unwrap(),
        )
        .unwrap();
        let out = cs_itm_loss(&batch).unwrap();
        assert!(out.loss <= 1e-20, "loss {}", out.loss);
    }

    #[test]
    fn beta_zero_is_plain_mean_cross_entropy() {
        let batch = random_itm_batch(11, 6, 0.0);
        let out = cs_itm_loss(&batch).unwrap();
        let mut expected = 0.0;
        for i in 0..6 {
            let row: Vec<f64> = batch.pair_scores.row(i).to_vec();
            let lp = log_softmax(&row);
            for j in 0..2 {
                expected -= batch.labels[(i, j)] * lp[j];
            }
        }
        expected /= 6.0;
        assert!((out.loss - expected).abs() < 1e-6);
    }

    #[test]
    fn lowering_one_confidence_lowers_the_loss() {
        let batch = random_itm_batch(13, 6, 0.8);
        let base = cs_itm_loss(&batch).unwrap().loss;
        let mut cheaper = batch.clone();
        cheaper.confidences[4] *= 0.3;
        assert!(cs_itm_loss(&cheaper).unwrap().loss < base);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let batch = random_itm_batch(seed, 6, 0.8);
            let out = cs_itm_loss(&batch).unwrap();
            let mut worst = 0.0f64;
            for i in 0..6 {
                for j in 0..2 {
                    let numeric = central_difference(
                        |x| {
                            let mut b = batch.clone();
                            b.pair_scores[(i, j)] = x;
                            cs_itm_loss(&b).unwrap().loss
                        },
                        batch.pair_scores[(i, j)],
                        h,
                    );
                    worst = worst.max(gradient_error(out.grad_pair_scores[(i, j)], numeric));
                }
            }
            assert!(worst <= 1e-4, "seed {seed}: max relative error {worst}");
        }
    }
}
