//! Mini-batch gradient descent of the reference model on the selected
//! confidence-weighted losses. Fully deterministic under the config seed.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtr_core::confidence::BetaWeight;
use gtr_core::losses::{
    cs_id_loss, cs_irr_loss, cs_itc_loss, cs_itm_loss, cs_sdm_loss, sample_itm_pairs, IdBatch,
    IrrBatch, IrrText, ItmBatch, TrainingBatch,
};
use gtr_core::seed::{derive_seed, derive_seed_bytes};
use gtr_core::types::{PseudoCaption, Split};

use crate::config::{LossKind, PipelineConfig};
use crate::error::PipelineError;
use crate::manifest::Corpus;
use crate::model::{
    hashed_bag_of_words, token_bucket, tokenize, AttributeVocabulary, IdHead, ItmHead,
    ReferenceRetrievalModel, TEXT_HASH_DIM,
};

const SDM_EPSILON: f64 = 1e-8;

/// One training example: an image paired with its pseudo caption.
struct Sample {
    image_id: String,
    identity: String,
    image_features: Array1<f64>,
    text_bow: Array1<f64>,
    text: String,
    confidence: f64,
}

/// Trained model plus the per-epoch mean loss curve.
pub struct TrainOutcome {
    pub model: ReferenceRetrievalModel,
    pub loss_curve: Vec<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    use rand::Rng;
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Array2::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

/// Backprop through row normalization: given the normalized row `e`, its
/// pre-normalization norm `n` and the gradient w.r.t. `e`, return the
/// gradient w.r.t. the pre-normalization vector.
fn normalization_grad(e: &Array1<f64>, n: f64, de: &Array1<f64>) -> Array1<f64> {
    let radial = e.dot(de);
    de.iter()
        .zip(e.iter())
        .map(|(&d, &v)| (d - radial * v) / n)
        .collect()
}

/// Rank-1 accumulation `dw += du (x)^T` visiting only the non-zero feature
/// entries; both feature kinds here are sparse.
fn accumulate_outer(dw: &mut Array2<f64>, du: &Array1<f64>, x: &Array1<f64>) {
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        for (i, &dui) in du.iter().enumerate() {
            dw[(i, j)] += dui * xj;
        }
    }
}

fn build_samples(
    corpus: &Corpus,
    captions: &[PseudoCaption],
    vocabulary: &AttributeVocabulary,
) -> Result<Vec<Sample>, PipelineError> {
    let truth_table = corpus
        .truth_table
        .as_ref()
        .ok_or_else(|| PipelineError::Train("manifest lacks attribute columns".to_string()))?;
    let by_image: BTreeMap<&str, &PseudoCaption> = captions
        .iter()
        .map(|c| (c.image_id.as_str(), c))
        .collect();

    let mut train_images = corpus.split_images(Split::Train);
    train_images.sort_by(|a, b| a.image_id.cmp(&b.image_id));

    let mut samples = Vec::with_capacity(train_images.len());
    for image in train_images {
        let caption = by_image.get(image.image_id.as_str()).ok_or_else(|| {
            PipelineError::Captions(format!(
                "no pseudo caption for train image {:?}",
                image.image_id
            ))
        })?;
        let truth = truth_table.get(&image.image_id).ok_or_else(|| {
            PipelineError::Train(format!("no ground truth for image {:?}", image.image_id))
        })?;
        samples.push(Sample {
            image_id: image.image_id.clone(),
            identity: image.identity_id.clone(),
            image_features: vocabulary.encode(truth),
            text_bow: hashed_bag_of_words(&caption.text),
            text: caption.text.clone(),
            confidence: caption.confidence.value,
        });
    }
    Ok(samples)
}

/// Train the reference model on the pseudo captions.
pub fn train(
    corpus: &Corpus,
    captions: &[PseudoCaption],
    config: &PipelineConfig,
) -> Result<TrainOutcome, PipelineError> {
    let truth_table = corpus
        .truth_table
        .as_ref()
        .ok_or_else(|| PipelineError::Train("manifest lacks attribute columns".to_string()))?;
    let train_ids: Vec<&str> = corpus
        .split_images(Split::Train)
        .iter()
        .map(|i| i.image_id.as_str())
        .collect();
    if train_ids.is_empty() {
        return Err(PipelineError::EmptyTrainSet);
    }
    let vocabulary = AttributeVocabulary::from_truth_table(
        truth_table
            .iter()
            .filter(|(id, _)| train_ids.contains(&id.as_str()))
            .map(|(_, t)| t),
    );
    let samples = build_samples(corpus, captions, &vocabulary)?;
    if samples.is_empty() {
        return Err(PipelineError::EmptyTrainSet);
    }

    let beta = BetaWeight::new(config.beta)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut model = ReferenceRetrievalModel::init(
        vocabulary,
        config.embedding_dim,
        config.temperature_init,
        config.seed,
    );
    let d = config.embedding_dim;

    // Identity classes for the id head, sorted for determinism.
    let classes: Vec<String> = {
        let set: std::collections::BTreeSet<&str> =
            samples.iter().map(|s| s.identity.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    };
    let class_of: BTreeMap<&str, usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();

    if config.loss_set.contains(&LossKind::Itm) {
        model.itm_head = Some(ItmHead { scale: 1.0, bias: 0.0 });
    }
    if config.loss_set.contains(&LossKind::Id) {
        if classes.len() < 2 {
            return Err(PipelineError::Train(
                "id loss needs at least two identities".to_string(),
            ));
        }
        let mut rng = ChaCha8Rng::from_seed(derive_seed_bytes(config.seed, &["id-head"]));
        model.id_head = Some(IdHead {
            class_weights: xavier(&mut rng, classes.len(), d),
            biases: Array1::zeros(classes.len()),
            classes: classes.clone(),
        });
    }
    if config.loss_set.contains(&LossKind::Irr) {
        let mut rng = ChaCha8Rng::from_seed(derive_seed_bytes(config.seed, &["irr-head"]));
        model.irr_head = Some(xavier(&mut rng, TEXT_HASH_DIM, d));
    }

    let lr = config.learning_rate;
    let mut loss_curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::from_seed(derive_seed_bytes(
            config.seed,
            &["train", "shuffle", &epoch.to_string()],
        ));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let chunk = config.batch_size.min(samples.len());
        for (step, indices) in order.chunks(chunk).enumerate() {
            // A one-row remainder cannot form contrastive or matching pairs.
            if indices.len() < 2 && samples.len() >= 2 {
                continue;
            }
            let loss = train_step(&mut model, &samples, indices, config, beta, &class_of, epoch, step, lr)?;
            if !loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch, step });
            }
            epoch_loss += loss;
            batches += 1;
        }
        if batches == 0 {
            return Err(PipelineError::EmptyTrainSet);
        }
        loss_curve.push(epoch_loss / batches as f64);
    }

    model.loss_curve = loss_curve.clone();
    Ok(TrainOutcome { model, loss_curve })
}

#[allow(clippy::too_many_arguments)]
fn train_step(
    model: &mut ReferenceRetrievalModel,
    samples: &[Sample],
    indices: &[usize],
    config: &PipelineConfig,
    beta: BetaWeight,
    class_of: &BTreeMap<&str, usize>,
    epoch: usize,
    step: usize,
    lr: f64,
) -> Result<f64, PipelineError> {
    let b = indices.len();
    let d = model.embedding_dim();
    let tau = model.temperature();

    // Forward through both towers, caching pre-normalization norms.
    let mut image_embeddings = Array2::zeros((b, d));
    let mut text_embeddings = Array2::zeros((b, d));
    let mut image_norms = vec![0.0; b];
    let mut text_norms = vec![0.0; b];
    for (row, &idx) in indices.iter().enumerate() {
        let u = model.image_projection.dot(&samples[idx].image_features);
        let n = u.dot(&u).sqrt().max(1e-12);
        image_norms[row] = n;
        image_embeddings
            .row_mut(row)
            .assign(&u.mapv(|v| v / n));
        let s = model.text_projection.dot(&samples[idx].text_bow);
        let n = s.dot(&s).sqrt().max(1e-12);
        text_norms[row] = n;
        text_embeddings.row_mut(row).assign(&s.mapv(|v| v / n));
    }

    let batch = TrainingBatch::new(
        image_embeddings,
        text_embeddings,
        indices.iter().map(|&i| samples[i].confidence).collect(),
        indices.iter().map(|&i| samples[i].identity.clone()).collect(),
        tau,
        beta,
    )?;

    let mut total_loss = 0.0;
    let mut grad_images = Array2::<f64>::zeros((b, d));
    let mut grad_texts = Array2::<f64>::zeros((b, d));
    let mut grad_tau = 0.0;

    if config.loss_set.contains(&LossKind::Itc) {
        let out = cs_itc_loss(&batch)?;
        total_loss += out.loss;
        grad_images += &out.grad_image_embeddings;
        grad_texts += &out.grad_text_embeddings;
        grad_tau += out.grad_temperature;
    }
    if config.loss_set.contains(&LossKind::Sdm) {
        let out = cs_sdm_loss(&batch, SDM_EPSILON)?;
        total_loss += out.loss;
        grad_images += &out.grad_image_embeddings;
        grad_texts += &out.grad_text_embeddings;
        grad_tau += out.grad_temperature;
    }

    let mut itm_update: Option<(f64, f64)> = None;
    if config.loss_set.contains(&LossKind::Itm) {
        let head = model.itm_head.clone().expect("itm head initialized");
        let pair_seed = derive_seed(
            config.seed,
            &["train", "itm", &epoch.to_string(), &step.to_string()],
        );
        let pairs = sample_itm_pairs(&batch, config.itm_negative_strategy, pair_seed)?;
        let k = pairs.len();
        let mut scores = Array2::zeros((k, 2));
        let mut labels = Array2::zeros((k, 2));
        let mut similarities = vec![0.0; k];
        for (row, pair) in pairs.iter().enumerate() {
            let s = batch
                .image_embeddings
                .row(pair.image_index)
                .dot(&batch.text_embeddings.row(pair.text_index));
            similarities[row] = s;
            scores[(row, 1)] = head.scale * s + head.bias;
            let label = pair.label();
            labels[(row, 0)] = label[0];
            labels[(row, 1)] = label[1];
        }
        let itm_batch = ItmBatch::new(
            scores,
            labels,
            pairs.iter().map(|p| p.confidence).collect(),
            beta,
        )?;
        let out = cs_itm_loss(&itm_batch)?;
        total_loss += out.loss;
        let mut d_scale = 0.0;
        let mut d_bias = 0.0;
        for (row, pair) in pairs.iter().enumerate() {
            let dz = out.grad_pair_scores[(row, 1)];
            d_scale += dz * similarities[row];
            d_bias += dz;
            let ds = dz * head.scale;
            let text_row = batch.text_embeddings.row(pair.text_index).to_owned();
            let image_row = batch.image_embeddings.row(pair.image_index).to_owned();
            grad_images
                .row_mut(pair.image_index)
                .zip_mut_with(&text_row, |g, &t| *g += ds * t);
            grad_texts
                .row_mut(pair.text_index)
                .zip_mut_with(&image_row, |g, &v| *g += ds * v);
        }
        itm_update = Some((d_scale, d_bias));
    }

    let mut id_update: Option<(Array2<f64>, Array1<f64>)> = None;
    if config.loss_set.contains(&LossKind::Id) {
        let head = model.id_head.clone().expect("id head initialized");
        let m = head.classes.len();
        let mut labels = Array2::zeros((b, m));
        for (row, &idx) in indices.iter().enumerate() {
            let class = class_of[samples[idx].identity.as_str()];
            labels[(row, class)] = 1.0;
        }
        let id_batch = IdBatch::new(
            batch.text_embeddings.clone(),
            batch.image_embeddings.clone(),
            head.class_weights.clone(),
            head.biases.clone(),
            labels,
            batch.confidences.clone(),
            beta,
        )?;
        let out = cs_id_loss(&id_batch)?;
        total_loss += out.loss;
        grad_texts += &out.grad_text_features;
        grad_images += &out.grad_image_features;
        id_update = Some((out.grad_class_weights, out.grad_biases));
    }

    // (gradient w.r.t. the irr head, per-sample context-tower gradients)
    let mut irr_update: Option<(Array2<f64>, Vec<(usize, Array1<f64>, Array1<f64>)>)> = None;
    if config.loss_set.contains(&LossKind::Irr) {
        let head = model.irr_head.clone().expect("irr head initialized");
        let mut texts = Vec::new();
        let mut contexts = Vec::new();
        for (row, &idx) in indices.iter().enumerate() {
            let tokens = tokenize(&samples[idx].text);
            if tokens.is_empty() {
                continue;
            }
            let mask_seed = derive_seed(
                config.seed,
                &["train", "irr", &samples[idx].image_id, &epoch.to_string()],
            );
            let mask_position = (mask_seed % tokens.len() as u64) as usize;
            let target_bucket = token_bucket(&tokens[mask_position]);
            let mut context_bow = samples[idx].text_bow.clone();
            context_bow[target_bucket] -= 1.0;
            let u = model.text_projection.dot(&context_bow);
            let n = u.dot(&u).sqrt().max(1e-12);
            let context_embedding = u.mapv(|v| v / n);
            let anchor: Array1<f64> = (0..d)
                .map(|c| 0.5 * (batch.image_embeddings[(row, c)] + context_embedding[c]))
                .collect();
            let logits = head.dot(&anchor);
            let mut targets = Array2::zeros((1, TEXT_HASH_DIM));
            targets[(0, target_bucket)] = 1.0;
            texts.push(IrrText {
                logits: logits.insert_axis(Axis(0)),
                targets,
                confidence: samples[idx].confidence,
            });
            contexts.push((row, context_bow, context_embedding, n));
        }
        if !texts.is_empty() {
            let irr_batch = IrrBatch::new(texts, beta)?;
            let out = cs_irr_loss(&irr_batch)?;
            total_loss += out.loss;
            let mut grad_head = Array2::<f64>::zeros((TEXT_HASH_DIM, d));
            let mut context_grads = Vec::new();
            for (t, (row, context_bow, context_embedding, n)) in contexts.into_iter().enumerate() {
                let dlogits = out.grad_logits[t].row(0).to_owned();
                // dW_irr += dlogits (x) anchor; recompute the anchor.
                let anchor: Array1<f64> = (0..d)
                    .map(|c| 0.5 * (batch.image_embeddings[(row, c)] + context_embedding[c]))
                    .collect();
                accumulate_outer(&mut grad_head, &dlogits, &anchor);
                let danchor = head.t().dot(&dlogits);
                for c in 0..d {
                    grad_images[(row, c)] += 0.5 * danchor[c];
                }
                let dcontext = danchor.mapv(|v| 0.5 * v);
                let du = normalization_grad(&context_embedding, n, &dcontext);
                context_grads.push((row, du, context_bow));
            }
            irr_update = Some((grad_head, context_grads));
        }
    }

    // Backprop the embedding gradients through normalization and the linear
    // towers, then apply every update.
    let mut grad_image_projection = Array2::<f64>::zeros(model.image_projection.dim());
    let mut grad_text_projection = Array2::<f64>::zeros(model.text_projection.dim());
    for (row, &idx) in indices.iter().enumerate() {
        let e = batch.image_embeddings.row(row).to_owned();
        let de = grad_images.row(row).to_owned();
        let du = normalization_grad(&e, image_norms[row], &de);
        accumulate_outer(&mut grad_image_projection, &du, &samples[idx].image_features);

        let e = batch.text_embeddings.row(row).to_owned();
        let de = grad_texts.row(row).to_owned();
        let du = normalization_grad(&e, text_norms[row], &de);
        accumulate_outer(&mut grad_text_projection, &du, &samples[idx].text_bow);
    }
    if let Some((_, context_grads)) = &irr_update {
        for (_, du, bow) in context_grads {
            accumulate_outer(&mut grad_text_projection, du, bow);
        }
    }

    model.image_projection.zip_mut_with(&grad_image_projection, |w, &g| *w -= lr * g);
    model.text_projection.zip_mut_with(&grad_text_projection, |w, &g| *w -= lr * g);
    // d loss / d log_tau = d loss / d tau * tau.
    model.log_temperature -= lr * grad_tau * tau;

    if let Some((d_scale, d_bias)) = itm_update {
        let head = model.itm_head.as_mut().expect("itm head initialized");
        head.scale -= lr * d_scale;
        head.bias -= lr * d_bias;
    }
    if let Some((grad_weights, grad_biases)) = id_update {
        let head = model.id_head.as_mut().expect("id head initialized");
        head.class_weights.zip_mut_with(&grad_weights, |w, &g| *w -= lr * g);
        head.biases.zip_mut_with(&grad_biases, |w, &g| *w -= lr * g);
    }
    if let Some((grad_head, _)) = irr_update {
        let head = model.irr_head.as_mut().expect("irr head initialized");
        head.zip_mut_with(&grad_head, |w, &g| *w -= lr * g);
    }

    Ok(total_loss)
}
