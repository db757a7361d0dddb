use rayon::prelude::*;

use super::features::feature_buckets;
use super::{ClassifierError, ScoredDocument};
use crate::corpus::{read_documents, CorpusManifest, Document};

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

/// Parameters of a trained classifier. `input` is a row-major
/// `bucket_count × embedding_dim` matrix; `output` is `2 × embedding_dim`
/// with the negative class in row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub(crate) bucket_count: usize,
    pub(crate) embedding_dim: usize,
    pub(crate) input: Vec<f32>,
    pub(crate) output: Vec<f32>,
    pub(crate) label_names: [String; 2],
    pub(crate) train_config_hash: String,
}

impl ClassifierModel {
    pub fn from_parts(
        bucket_count: usize,
        embedding_dim: usize,
        input: Vec<f32>,
        output: Vec<f32>,
        label_names: [String; 2],
        train_config_hash: String,
    ) -> Result<Self, String> {
        if bucket_count == 0 || embedding_dim == 0 {
            return Err("bucket_count and embedding_dim must be positive".into());
        }
        if input.len() != bucket_count * embedding_dim {
            return Err("input matrix has the wrong size".into());
        }
        if output.len() != 2 * embedding_dim {
            return Err("output matrix has the wrong size".into());
        }
        if !input.iter().chain(&output).all(|v| v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        Ok(ClassifierModel {
            bucket_count,
            embedding_dim,
            input,
            output,
            label_names,
            train_config_hash,
        })
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn input_embeddings(&self) -> &[f32] {
        &self.input
    }

    pub fn output_weights(&self) -> &[f32] {
        &self.output
    }

    pub fn label_names(&self) -> &[String; 2] {
        &self.label_names
    }

    pub fn train_config_hash(&self) -> &str {
        &self.train_config_hash
    }

    /// Short identifier recorded next to every score.
    pub fn id(&self) -> String {
        self.train_config_hash.chars().take(12).collect()
    }

    /// Mean of the input rows selected by `buckets`; zero when empty.
    pub(crate) fn hidden(&self, buckets: &[u32]) -> Vec<f64> {
        let d = self.embedding_dim;
        let mut h = vec![0f64; d];
        if buckets.is_empty() {
            return h;
        }
        for &b in buckets {
            let row = &self.input[b as usize * d..(b as usize + 1) * d];
            for (acc, v) in h.iter_mut().zip(row) {
                *acc += *v as f64;
            }
        }
        let inv = 1.0 / buckets.len() as f64;
        h.iter_mut().for_each(|v| *v *= inv);
        h
    }

    /// `[P(negative), P(positive)]` for `text`.
    pub fn probabilities(&self, text: &str) -> [f64; 2] {
        let h = self.hidden(&feature_buckets(text, self.bucket_count));
        let d = self.embedding_dim;
        let logit = |c: usize| -> f64 {
            self.output[c * d..(c + 1) * d]
                .iter()
                .zip(&h)
                .map(|(w, x)| *w as f64 * x)
                .sum()
        };
        let diff = logit(NEGATIVE) - logit(POSITIVE);
        // logistic of the logit difference is the 2-class softmax
        let p_pos = if diff >= 0.0 {
            let e = (-diff).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + diff.exp())
        };
        [1.0 - p_pos, p_pos]
    }

    pub fn score_text(&self, text: &str) -> f64 {
        self.probabilities(text)[POSITIVE]
    }

    pub fn score(&self, doc: &Document) -> ScoredDocument {
        ScoredDocument {
            doc_id: doc.id.clone(),
            score: self.score_text(&doc.text),
            classifier_id: self.id(),
        }
    }
}

/// Score every document of a corpus, in shard order.
pub fn score_corpus(
    model: &ClassifierModel,
    manifest: &CorpusManifest,
) -> Result<Vec<ScoredDocument>, ClassifierError> {
    let docs = read_documents(manifest)?;
    Ok(docs.par_iter().map(|d| model.score(d)).collect())
}
