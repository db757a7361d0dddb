//! Analyses of raw versus rewritten text: rank correlation of quality
//! scores, semantic similarity, word-bigram diversity and length statistics.
//! Every analysis emits plain data (JSON/CSV); plotting happens elsewhere.

mod bigrams;
mod embedding;
mod kde;
mod lengths;
pub mod report;
mod spearman;

use thiserror::Error;

pub use bigrams::{
    bigram_tokens, diversity_curve, nested_sample, unique_bigrams, BigramCounter, CurveAxis, CurvePoint,
    DiversityCurve, BIGRAM_TOKENIZATION,
};
pub use embedding::{
    cosine, cosine_similarity_distribution, EmbeddingProvider, EmbeddingVector, FileProvider,
    HttpProvider, SimilarityReport,
};
pub use kde::{kde, kde_grid, silverman_bandwidth, Bandwidth};
pub use lengths::{length_stats, LengthStats};
pub use spearman::{midranks, pair_scores, spearman, t_test_p_value, PairedScores, SpearmanResult};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("all values of `{0}` are equal; correlation is undefined")]
    DegenerateVariance(&'static str),
    #[error("embedding dimension mismatch for `{id}`: {a} vs {b}")]
    DimensionMismatch { id: String, a: usize, b: usize },
    #[error("embedding provider failed for `{id}`: {reason}")]
    ProviderFailure { id: String, reason: String },
    #[error("sample size {size} exceeds available {available}")]
    SampleTooLarge { size: u64, available: u64 },
    #[error("sample sizes must be positive and strictly increasing")]
    InvalidSizes,
    #[error("bandwidth must be positive and finite")]
    InvalidBandwidth,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("bad input {path}: {reason}")]
    BadInput { path: std::path::PathBuf, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}
