//! Document corpora: records, manifests, sharded JSONL storage, ingestion
//! and exact deduplication.

mod dedup;
mod ingest;
mod store;
pub mod tokenizer;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dedup::{deduplicate, normalize_for_dedup, DedupReport};
pub use ingest::{ingest, IngestOptions, IngestReport, SkippedRecord};
pub use store::{read_documents, subset_corpus, write_corpus, WriteOptions, MANIFEST_FILE};
pub use tokenizer::{count_tokens, Tokenizer, WHITESPACE_ID};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown tokenizer `{0}`")]
    UnknownTokenizer(String),
    #[error("input contains no valid documents")]
    EmptyCorpus,
    #[error("malformed record at {path}:{line}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("invalid manifest {path}: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    #[default]
    Raw,
    Rewritten,
    External,
}

impl SourceTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Raw => "raw",
            SourceTag::Rewritten => "rewritten",
            SourceTag::External => "external",
        }
    }
}

/// One web or synthetic text record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub source_tag: SourceTag,
    pub token_count: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, tokenizer: &Tokenizer) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            token_count: tokenizer.count(&text),
            text,
            url: None,
            source_tag: SourceTag::Raw,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_source(mut self, tag: SourceTag) -> Self {
        self.source_tag = tag;
        self
    }
}

/// Which pipeline stage produced an artifact, under which config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub stage: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_hash: impl Into<String>, stage: impl Into<String>) -> Self {
        Provenance {
            config_hash: config_hash.into(),
            stage: stage.into(),
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }
}

/// Description of a corpus on disk. Shard paths are stored relative to the
/// directory holding `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_name: String,
    pub shard_paths: Vec<PathBuf>,
    pub document_count: u64,
    pub total_tokens: u64,
    pub tokenizer_id: String,
    /// Per-source token totals, present on mixed corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_tokens: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(skip)]
    root: PathBuf,
}

impl CorpusManifest {
    /// Load from a `manifest.json` path or a directory containing one.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let bytes = std::fs::read(&file).map_err(|e| CorpusError::io(&file, e))?;
        let mut m: CorpusManifest =
            serde_json::from_slice(&bytes).map_err(|e| CorpusError::InvalidManifest {
                path: file.clone(),
                reason: e.to_string(),
            })?;
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub(crate) fn set_root(&mut self, root: PathBuf) {
        self.root = root;
    }

    pub fn shard_files(&self) -> Vec<PathBuf> {
        self.shard_paths.iter().map(|p| self.root.join(p)).collect()
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn save(&self) -> Result<(), CorpusError> {
        let path = self.manifest_path();
        crate::util::write_json_atomic(&path, self).map_err(|e| CorpusError::io(&path, e))
    }
}
