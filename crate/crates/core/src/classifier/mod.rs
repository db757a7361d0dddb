//! Two-class linear text classifier over hashed word unigrams and bigrams,
//! plus global top-k% selection and score quantiles.

mod features;
mod format;
mod model;
mod select;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::feature_buckets;
pub use model::{score_corpus, ClassifierModel, NEGATIVE, POSITIVE};
pub use select::{
    read_scores, score_quantile, select_top_fraction, select_top_token_fraction, selection_count,
    write_scores,
};
pub use train::{compose_positives, train, TrainConfig, TrainSet};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training class `{0}` has no documents")]
    EmptyClass(&'static str),
    #[error("document `{0}` appears in both training classes")]
    OverlappingClasses(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("training diverged at step {step}: non-finite parameter")]
    DivergedTraining { step: u64 },
    #[error("empty input")]
    EmptyInput,
    #[error("fraction {0} outside (0, 1]")]
    InvalidFraction(f64),
    #[error("malformed model file {path}: {reason}")]
    BadModel { path: PathBuf, reason: String },
    #[error("malformed scores file {path}: {reason}")]
    BadScores { path: PathBuf, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

impl ClassifierError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        ClassifierError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A document id paired with its positive-class probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub score: f64,
    pub classifier_id: String,
}
