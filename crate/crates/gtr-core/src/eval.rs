//! Ranking metrics: cosine similarity, Rank@K and mean average precision.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("dimension mismatch: queries are {query_dim}-dim, gallery is {gallery_dim}-dim")]
    DimensionMismatch { query_dim: usize, gallery_dim: usize },
    #[error("degenerate corpus: {0}")]
    DegenerateCorpus(String),
    #[error("query {query_index} has no relevant gallery item")]
    NoRelevantItem { query_index: usize },
}

/// Query and gallery embeddings with their identity labels.
#[derive(Debug, Clone)]
pub struct EvalCorpus {
    pub query_embeddings: Array2<f64>,
    pub query_identities: Vec<String>,
    pub gallery_embeddings: Array2<f64>,
    pub gallery_identities: Vec<String>,
}

/// The retrieval scoreboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub map: f64,
    pub queries: usize,
    pub gallery: usize,
}

impl EvalReport {
    /// Flat `key = value` rendition, one line per field.
    pub fn to_key_value(&self) -> String {
        format!(
            "r1 = {}\nr5 = {}\nr10 = {}\nmap = {}\nqueries = {}\ngallery = {}\n",
            self.r1, self.r5, self.r10, self.map, self.queries, self.gallery
        )
    }
}

/// Pairwise dot products; cosine similarity given unit-norm rows.
pub fn similarity_matrix(
    queries: &Array2<f64>,
    gallery: &Array2<f64>,
) -> Result<Array2<f64>, EvalError> {
    if queries.ncols() != gallery.ncols() {
        return Err(EvalError::DimensionMismatch {
            query_dim: queries.ncols(),
            gallery_dim: gallery.ncols(),
        });
    }
    Ok(queries.dot(&gallery.t()))
}

/// Gallery indices sorted by descending similarity, ties broken by ascending
/// gallery index. The documented deterministic ranking every metric uses.
fn ranked_gallery(similarities: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..similarities.len()).collect();
    order.sort_by(|&a, &b| {
        similarities[b]
            .partial_cmp(&similarities[a])
            .expect("similarities must not be NaN")
            .then(a.cmp(&b))
    });
    order
}

fn check_corpus(
    sim: &Array2<f64>,
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<(), EvalError> {
    let (q, g) = sim.dim();
    if q == 0 || g == 0 {
        return Err(EvalError::DegenerateCorpus(format!(
            "{q} queries against {g} gallery items"
        )));
    }
    if query_ids.len() != q || gallery_ids.len() != g {
        return Err(EvalError::DegenerateCorpus(format!(
            "similarity is {q} x {g} but {} query ids and {} gallery ids given",
            query_ids.len(),
            gallery_ids.len()
        )));
    }
    Ok(())
}

/// Fraction of queries whose top-K ranked gallery rows contain the query's
/// identity.
pub fn rank_at_k(
    sim: &Array2<f64>,
    query_ids: &[String],
    gallery_ids: &[String],
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::DegenerateCorpus("K must be >= 1".to_string()));
    }
    check_corpus(sim, query_ids, gallery_ids)?;
    let q = sim.nrows();
    let mut successes = 0usize;
    for (i, query_id) in query_ids.iter().enumerate() {
        let order = ranked_gallery(&sim.row(i).to_vec());
        if order
            .iter()
            .take(k)
            .any(|&j| &gallery_ids[j] == query_id)
        {
            successes += 1;
        }
    }
    Ok(successes as f64 / q as f64)
}

/// Mean over queries of average precision with identity-level relevance.
///
/// Per query, `AP = (1/R) sum over relevant ranks r of precision@r`, using the
/// same ranking rule as [`rank_at_k`].
pub fn mean_average_precision(
    sim: &Array2<f64>,
    query_ids: &[String],
    gallery_ids: &[String],
) -> Result<f64, EvalError> {
    check_corpus(sim, query_ids, gallery_ids)?;
    let q = sim.nrows();
    let mut total = 0.0;
    for (i, query_id) in query_ids.iter().enumerate() {
        let order = ranked_gallery(&sim.row(i).to_vec());
        let relevant_total = gallery_ids.iter().filter(|g| *g == query_id).count();
        if relevant_total == 0 {
            return Err(EvalError::NoRelevantItem { query_index: i });
        }
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank0, &j) in order.iter().enumerate() {
            if &gallery_ids[j] == query_id {
                hits += 1;
                ap += hits as f64 / (rank0 + 1) as f64;
            }
        }
        total += ap / relevant_total as f64;
    }
    Ok(total / q as f64)
}

/// Convenience wrapper: similarity, R@{1,5,10} and mAP in one report.
pub fn evaluate_corpus(corpus: &EvalCorpus) -> Result<EvalReport, EvalError> {
    let sim = similarity_matrix(&corpus.query_embeddings, &corpus.gallery_embeddings)?;
    let r1 = rank_at_k(&sim, &corpus.query_identities, &corpus.gallery_identities, 1)?;
    let r5 = rank_at_k(&sim, &corpus.query_identities, &corpus.gallery_identities, 5)?;
    let r10 = rank_at_k(&sim, &corpus.query_identities, &corpus.gallery_identities, 10)?;
    let map = mean_average_precision(&sim, &corpus.query_identities, &corpus.gallery_identities)?;
    Ok(EvalReport {
        r1,
        r5,
        r10,
        map,
        queries: corpus.query_embeddings.nrows(),
        gallery: corpus.gallery_embeddings.nrows(),
    })
}
