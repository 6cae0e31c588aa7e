//! Confidence-weighted masked-token prediction loss.

use ndarray::Array2;

use super::{beta_weights, log_softmax, IrrBatch, LossError};

#[derive(Debug, Clone)]
pub struct IrrLoss {
    pub loss: f64,
    /// One gradient matrix per text, matching the text's logits shape.
    pub grad_logits: Vec<Array2<f64>>,
}

/// Masked-token cross-entropy averaged over texts, each text scaled by
/// `C_t^beta / (|M_t| |V|)`. The `1/|V|` factor is part of the definition and
/// is kept exactly as written.
pub fn cs_irr_loss(batch: &IrrBatch) -> Result<IrrLoss, LossError> {
    let n = batch.texts.len();
    if n == 0 {
        return Err(LossError::DegenerateBatch("no texts".to_string()));
    }
    let confidences: Vec<f64> = batch.texts.iter().map(|t| t.confidence).collect();
    let weights = beta_weights(&confidences, batch.beta);

    let mut loss = 0.0;
    let mut grad_logits = Vec::with_capacity(n);
    for (text, &w) in batch.texts.iter().zip(&weights) {
        let masked = text.logits.nrows();
        let vocab = text.logits.ncols();
        let scale = w / (n as f64 * masked as f64 * vocab as f64);
        let mut grad = Array2::<f64>::zeros((masked, vocab));
        for i in 0..masked {
            let row: Vec<f64> = text.logits.row(i).to_vec();
            let log_probs = log_softmax(&row);
            for j in 0..vocab {
                loss -= scale * text.targets[(i, j)] * log_probs[j];
                grad[(i, j)] = scale * (log_probs[j].exp() - text.targets[(i, j)]);
            }
        }
        grad_logits.push(grad);
    }

    Ok(IrrLoss { loss, grad_logits })
}
