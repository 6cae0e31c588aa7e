//! Confidence-weighted image-text contrastive loss.

use ndarray::Array2;

use super::{beta_weights, log_softmax, LossError, TrainingBatch};

/// Value and gradients of the contrastive loss.
#[derive(Debug, Clone)]
pub struct ItcLoss {
    pub loss: f64,
    pub grad_image_embeddings: Array2<f64>,
    pub grad_text_embeddings: Array2<f64>,
    pub grad_temperature: f64,
}

/// Symmetric InfoNCE over a batch, each pair's log-term weighted by `C_i^beta`.
///
/// With `S[i][m]` the image/text similarities, the image-to-text direction is
/// `-(1/M) sum_i w_i log softmax_row(S/tau)[i][i]`; text-to-image mirrors it
/// over columns with the same per-pair weight; the loss averages the two.
pub fn cs_itc_loss(batch: &TrainingBatch) -> Result<ItcLoss, LossError> {
    let m = batch.len();
    if m == 0 {
        return Err(LossError::DegenerateBatch("empty batch".to_string()));
    }
    let tau = batch.temperature;
    let weights = beta_weights(&batch.confidences, batch.beta);

    let similarities = batch.image_embeddings.dot(&batch.text_embeddings.t());
    let logits = similarities.mapv(|s| s / tau);

    let mut grad_logits = Array2::<f64>::zeros((m, m));
    let mut loss_i2t = 0.0;
    let mut loss_t2i = 0.0;

    for i in 0..m {
        let row: Vec<f64> = logits.row(i).to_vec();
        let log_probs = log_softmax(&row);
        loss_i2t -= weights[i] * log_probs[i];
        for (j, lp) in log_probs.iter().enumerate() {
            let delta = if j == i { 1.0 } else { 0.0 };
            grad_logits[(i, j)] += 0.5 * weights[i] / m as f64 * (lp.exp() - delta);
        }
    }
    for i in 0..m {
        let column: Vec<f64> = logits.column(i).to_vec();
        let log_probs = log_softmax(&column);
        loss_t2i -= weights[i] * log_probs[i];
        for (j, lp) in log_probs.iter().enumerate() {
            let delta = if j == i { 1.0 } else { 0.0 };
            grad_logits[(j, i)] += 0.5 * weights[i] / m as f64 * (lp.exp() - delta);
        }
    }

    let loss = (loss_i2t + loss_t2i) / (2.0 * m as f64);
    let grad_image_embeddings = grad_logits.dot(&batch.text_embeddings).mapv(|g| g / tau);
    let grad_text_embeddings = grad_logits.t().dot(&batch.image_embeddings).mapv(|g| g / tau);
    let grad_temperature = -(&grad_logits * &logits).sum() / tau;

    Ok(ItcLoss {
        loss,
        grad_image_embeddings,
        grad_text_embeddings,
        grad_temperature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::BetaWeight;
    use crate::losses::test_support::{central_difference, gradient_error, random_batch};
    use ndarray::array;

    #[test]
    fn single_pair_batch_is_identically_zero() {
        let batch = TrainingBatch::new(
            array![[1.0, 0.0]],
            array![[0.0, 1.0]],
            vec![0.3],
            vec!["a".to_string()],
            0.07,
            BetaWeight::new(2.0).unwrap(),
        )
        .unwrap();
        let out = cs_itc_loss(&batch).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.grad_temperature, 0.0);
        assert!(out.grad_image_embeddings.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn empty_batch_is_degenerate() {
        let batch = TrainingBatch {
            image_embeddings: Array2::zeros((0, 4)),
            text_embeddings: Array2::zeros((0, 4)),
            confidences: vec![],
            identity_labels: vec![],
            temperature: 0.07,
            beta: BetaWeight::zero(),
        };
        assert!(matches!(
            cs_itc_loss(&batch),
            Err(LossError::DegenerateBatch(_))
        ));
    }

    #[test]
    fn beta_zero_matches_the_unweighted_form() {
        let mut batch = random_batch(5, 6, 8, 3);
        batch.beta = BetaWeight::zero();
        let weighted = cs_itc_loss(&batch).unwrap().loss;

        // Unweighted oracle computed with plain loops.
        let m = batch.len();
        let tau = batch.temperature;
        let mut expected = 0.0;
        for i in 0..m {
            let row: Vec<f64> = (0..m)
                .map(|j| batch.image_embeddings.row(i).dot(&batch.text_embeddings.row(j)) / tau)
                .collect();
            let col: Vec<f64> = (0..m)
                .map(|j| batch.image_embeddings.row(j).dot(&batch.text_embeddings.row(i)) / tau)
                .collect();
            expected -= log_softmax(&row)[i] + log_softmax(&col)[i];
        }
        expected /= 2.0 * m as f64;
        assert!((weighted - expected).abs() < 1e-6);
    }

    #[test]
    fn permuting_rows_leaves_the_loss_unchanged() {
        let batch = random_batch(6, 6, 8, 3);
        let base = cs_itc_loss(&batch).unwrap().loss;
        let order = [3usize, 0, 5, 1, 4, 2];
        let permuted = TrainingBatch {
            image_embeddings: ndarray::stack(
                ndarray::Axis(0),
                &order
                    .iter()
                    .map(|&i| batch.image_embeddings.row(i))
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
            text_embeddings: ndarray::stack(
                ndarray::Axis(0),
                &order
                    .iter()
                    .map(|&i| batch.text_embeddings.row(i))
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
            confidences: order.iter().map(|&i| batch.confidences[i]).collect(),
            identity_labels: order.iter().map(|&i| batch.identity_labels[i].clone()).collect(),
            temperature: batch.temperature,
            beta: batch.beta,
        };
        let shuffled = cs_itc_loss(&permuted).unwrap().loss;
        assert!((base - shuffled).abs() < 1e-12);
    }

    #[test]
    fn lowering_one_confidence_lowers_its_contribution() {
        let batch = random_batch(7, 5, 6, 3);
        let base = cs_itc_loss(&batch).unwrap().loss;
        let mut cheaper = batch.clone();
        cheaper.confidences[2] *= 0.5;
        let lower = cs_itc_loss(&cheaper).unwrap().loss;
        assert!(lower < base);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..20u64 {
            let batch = random_batch(seed, 4, 8, 2);
            let out = cs_itc_loss(&batch).unwrap();

            let mut worst = 0.0f64;
            for r in 0..4 {
                for c in 0..8 {
                    let numeric = central_difference(
                        |x| {
                            let mut b = batch.clone();
                            b.image_embeddings[(r, c)] = x;
                            cs_itc_loss(&b).unwrap().loss
                        },
                        batch.image_embeddings[(r, c)],
                        h,
                    );
                    worst = worst.max(gradient_error(out.grad_image_embeddings[(r, c)], numeric));

                    let numeric = central_difference(
                        |x| {
                            let mut b = batch.clone();
                            b.text_embeddings[(r, c)] = x;
                            cs_itc_loss(&b).unwrap().loss
                        },
                        batch.text_embeddings[(r, c)],
                        h,
                    );
                    worst = worst.max(gradient_error(out.grad_text_embeddings[(r, c)], numeric));
                }
            }
            let numeric = central_difference(
                |x| {
                    let mut b = batch.clone();
                    b.temperature = x;
                    cs_itc_loss(&b).unwrap().loss
                },
                batch.temperature,
                h,
            );
            worst = worst.max(gradient_error(out.grad_temperature, numeric));
            assert!(worst <= 1e-4, "seed {seed}: max relative error {worst}");
        }
    }
}
