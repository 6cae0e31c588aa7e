//! Evaluation: embed a split's images and query texts, rank, and report
//! R@K plus mAP.

use serde::{Deserialize, Serialize};

use gtr_core::eval::{evaluate_corpus, EvalCorpus, EvalError, EvalReport};
use gtr_core::types::{AttributeAnswer, AttributeSet, Split};

use gtr_core::a2t::render_template;
use gtr_core::i2a::GroundTruth;

use ndarray::Array2;

use crate::error::PipelineError;
use crate::manifest::Corpus;
use crate::model::ReferenceRetrievalModel;

/// The eval report plus how this run sourced its queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    #[serde(flatten)]
    pub eval: EvalReport,
    pub split: String,
    pub query_source: String,
}

pub fn parse_split(name: &str) -> Result<Split, PipelineError> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(PipelineError::Config(format!(
            "unknown split {other:?}, expected train, val or test"
        ))),
    }
}

/// Template rendering of an image's ground truth, used as the query when the
/// manifest carries no reference caption.
fn template_of_truth(image_id: &str, truth: &GroundTruth) -> String {
    let set = AttributeSet {
        image_id: image_id.to_string(),
        answers: truth
            .iter()
            .map(|(key, value)| AttributeAnswer {
                key: *key,
                raw_answer: value.clone(),
                value: value.clone(),
                confidence: 1.0,
            })
            .collect(),
    };
    render_template(&set)
}

/// Evaluate a trained model on one split of the corpus.
///
/// Queries come from the manifest's reference captions when every split image
/// has one, else from template renderings of the ground truth; the choice is
/// recorded in the report.
pub fn evaluate(
    model: &ReferenceRetrievalModel,
    corpus: &Corpus,
    split: Split,
) -> Result<PipelineReport, PipelineError> {
    let truth_table = corpus
        .truth_table
        .as_ref()
        .ok_or_else(|| PipelineError::Eval(EvalError::DegenerateCorpus(
            "manifest lacks attribute columns for image embedding".to_string(),
        )))?;

    let mut images = corpus.split_images(split);
    images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if images.is_empty() {
        return Err(PipelineError::Eval(EvalError::DegenerateCorpus(format!(
            "split {split} is empty"
        ))));
    }

    let use_reference = images
        .iter()
        .all(|i| corpus.captions.contains_key(&i.image_id));
    let query_source = if use_reference {
        "reference_captions"
    } else {
        "template_of_truth"
    };

    let d = model.embedding_dim();
    let mut gallery = Array2::zeros((images.len(), d));
    let mut queries = Array2::zeros((images.len(), d));
    let mut identities = Vec::with_capacity(images.len());
    for (row, image) in images.iter().enumerate() {
        let truth = truth_table.get(&image.image_id).ok_or_else(|| {
            PipelineError::Eval(EvalError::DegenerateCorpus(format!(
                "no ground truth for image {:?}",
                image.image_id
            )))
        })?;
        gallery
            .row_mut(row)
            .assign(&model.embed_image(&model.attribute_vocabulary.encode(truth)));
        let query_text = if use_reference {
            corpus.captions[&image.image_id].clone()
        } else {
            template_of_truth(&image.image_id, truth)
        };
        queries.row_mut(row).assign(&model.embed_text(&query_text));
        identities.push(image.identity_id.clone());
    }

    let eval = evaluate_corpus(&EvalCorpus {
        query_embeddings: queries,
        query_identities: identities.clone(),
        gallery_embeddings: gallery,
        gallery_identities: identities,
    })?;

    Ok(PipelineReport {
        eval,
        split: split.to_string(),
        query_source: query_source.to_string(),
    })
}
