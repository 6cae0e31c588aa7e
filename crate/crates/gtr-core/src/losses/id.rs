//! Confidence-weighted identity classification loss over both modalities.

use ndarray::{Array1, Array2};

use super::{beta_weights, log_softmax, IdBatch, LossError};

#[derive(Debug, Clone)]
pub struct IdLoss {
    pub loss: f64,
    pub grad_text_features: Array2<f64>,
    pub grad_image_features: Array2<f64>,
    pub grad_class_weights: Array2<f64>,
    pub grad_biases: Array1<f64>,
}

/// Identity cross-entropy for images and texts with the `1/(MN)` normalization
/// applied literally.
///
/// Only the text branch sees the confidence: its logits are
/// `C_i^beta (W_k . f_i^t) + b_k`, the weight scaling the projection but not
/// the bias. The image branch is the same formula with the weight fixed at 1.
pub fn cs_id_loss(batch: &IdBatch) -> Result<IdLoss, LossError> {
    let n = batch.text_features.nrows();
    let m = batch.class_weights.nrows();
    if n == 0 {
        return Err(LossError::DegenerateBatch("no samples".to_string()));
    }
    let weights = beta_weights(&batch.confidences, batch.beta);
    let scale = 1.0 / (m as f64 * n as f64);

    let mut loss = 0.0;
    let mut grad_text_features = Array2::<f64>::zeros(batch.text_features.dim());
    let mut grad_image_features = Array2::<f64>::zeros(batch.image_features.dim());
    let mut grad_class_weights = Array2::<f64>::zeros(batch.class_weights.dim());
    let mut grad_biases = Array1::<f64>::zeros(m);

    // branch_weight scales the projection term of every sample in a branch;
    // 1.0 for images, C_i^beta for texts.
    let accumulate = |features: &Array2<f64>,
                          grad_features: &mut Array2<f64>,
                          grad_class_weights: &mut Array2<f64>,
                          grad_biases: &mut Array1<f64>,
                          branch_weight: &dyn Fn(usize) -> f64|
     -> f64 {
        let mut branch_loss = 0.0;
        for i in 0..n {
            let w = branch_weight(i);
            let projection = batch.class_weights.dot(&features.row(i));
            let logits: Vec<f64> = (0..m).map(|k| w * projection[k] + batch.biases[k]).collect();
            let log_probs = log_softmax(&logits);
            for k in 0..m {
                branch_loss -= scale * batch.labels[(i, k)] * log_probs[k];
                let dz = scale * (log_probs[k].exp() - batch.labels[(i, k)]);
                grad_biases[k] += dz;
                for c in 0..features.ncols() {
                    grad_features[(i, c)] += dz * w * batch.class_weights[(k, c)];
                    grad_class_weights[(k, c)] += dz * w * features[(i, c)];
                }
            }
        }
        branch_loss
    };

    loss += accumulate(
        &batch.image_features,
        &mut grad_image_features,
        &mut grad_class_weights,
        &mut grad_biases,
        &|_| 1.0,
    );
    loss += accumulate(
        &batch.text_features,
        &mut grad_text_features,
        &mut grad_class_weights,
        &mut grad_biases,
        &|i| weights[i],
    );

    Ok(IdLoss {
        loss,
        grad_text_features,
        grad_image_features,
        grad_class_weights,
        grad_biases,
    })
}
