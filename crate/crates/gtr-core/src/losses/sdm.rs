//! Confidence-weighted similarity distribution matching loss.

use ndarray::Array2;

use super::{beta_weights, log_softmax, LossError, TrainingBatch};

#[derive(Debug, Clone)]
pub struct SdmLoss {
    pub loss: f64,
    pub grad_image_embeddings: Array2<f64>,
    pub grad_text_embeddings: Array2<f64>,
    pub grad_temperature: f64,
}

/// KL divergence between the softmaxed similarity rows and the normalized
/// identity-match distribution.
///
/// Image-to-text scales each candidate similarity by the candidate text's
/// `C_j^beta` inside the softmax; text-to-image scales a query row by the
/// query text's own `C_i^beta`, acting as a per-row temperature.
pub fn cs_sdm_loss(batch: &TrainingBatch, epsilon: f64) -> Result<SdmLoss, LossError> {
    let n = batch.len();
    if n == 0 {
        return Err(LossError::DegenerateBatch("empty batch".to_string()));
    }
    let tau = batch.temperature;
    let weights = beta_weights(&batch.confidences, batch.beta);

    let similarities = batch.image_embeddings.dot(&batch.text_embeddings.t());
    // Normalized ground-truth match distribution per row.
    let mut q = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let matches: Vec<usize> = (0..n)
            .filter(|&j| batch.identity_labels[i] == batch.identity_labels[j])
            .collect();
        for &j in &matches {
            q[(i, j)] = 1.0 / matches.len() as f64;
        }
    }

    let mut loss = 0.0;
    let mut grad_similarities = Array2::<f64>::zeros((n, n));
    let mut grad_temperature = 0.0;

    // KL(p || q + eps) of one softmax row; returns the row term and fills
    // the gradient with d(term)/d(logit).
    let row_term = |logits: &[f64], q_row: &[f64], grad_out: &mut [f64]| -> f64 {
        let log_probs = log_softmax(logits);
        let probs: Vec<f64> = log_probs.iter().map(|lp| lp.exp()).collect();
        let g: Vec<f64> = log_probs
            .iter()
            .zip(q_row)
            .map(|(lp, &qv)| lp - (qv + epsilon).ln())
            .collect();
        let mean_g: f64 = probs.iter().zip(&g).map(|(p, gv)| p * gv).sum();
        for j in 0..logits.len() {
            grad_out[j] = probs[j] * (g[j] - mean_g);
        }
        mean_g
    };

    // Image-to-text: logits z[i][j] = w_j * s(v_i, t_j) / tau.
    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|j| weights[j] * similarities[(i, j)] / tau).collect();
        let q_row: Vec<f64> = (0..n).map(|j| q[(i, j)]).collect();
        let mut grad_logits = vec![0.0; n];
        loss += row_term(&logits, &q_row, &mut grad_logits) / n as f64;
        for j in 0..n {
            let dz = grad_logits[j] / n as f64;
            grad_similarities[(i, j)] += dz * weights[j] / tau;
            grad_temperature -= dz * logits[j] / tau;
        }
    }

    // Text-to-image: logits z[i][j] = w_i * s(t_i, v_j) / tau with the query
    // text's own weight.
    for i in 0..n {
        let logits: Vec<f64> = (0..n).map(|j| weights[i] * similarities[(j, i)] / tau).collect();
        let q_row: Vec<f64> = (0..n).map(|j| q[(i, j)]).collect();
        let mut grad_logits = vec![0.0; n];
        loss += row_term(&logits, &q_row, &mut grad_logits) / n as f64;
        for j in 0..n {
            let dz = grad_logits[j] / n as f64;
            grad_similarities[(j, i)] += dz * weights[i] / tau;
            grad_temperature -= dz * logits[j] / tau;
        }
    }

    let grad_image_embeddings = grad_similarities.dot(&batch.text_embeddings);
    let grad_text_embeddings = grad_similarities.t().dot(&batch.image_embeddings);

    Ok(SdmLoss {
        loss,
        grad_image_embeddings,
        grad_text_embeddings,
        grad_temperature,
    })
}
