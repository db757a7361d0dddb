//! Guided rewriting of every document through an OpenAI-compatible
//! chat-completions endpoint.

mod client;
mod engine;
mod ledger;
#[cfg(feature = "mock-server")]
pub mod mock;
mod parse;
mod prompt;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{AttemptError, ChatClient, Completion, GenerationConfig};
pub use engine::{rewrite_corpus, rewrite_corpus_async, RewriteOptions, RewriteSummary};
pub use ledger::{read_failures, read_ledger, FailureRecord, LedgerEntry, LedgerStatus};
pub use parse::{compose, contains_tag, parse_tagged, scrub_tags, TAGS};
pub use prompt::{build_prompt, extract_document, BuiltPrompt, PROMPT_TEMPLATE, PROMPT_VERSION};

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const FAILURES_FILE: &str = "failures.jsonl";

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("completion has no improved-response tag pair")]
    MissingImprovedTags,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("request budget of {cap} exhausted after {completed} documents")]
    BudgetExceeded { cap: u64, completed: u64 },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl FinishReason {
    pub fn from_api(s: Option<&str>) -> Self {
        match s {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        }
    }
}

/// A parsed generation for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteOutput {
    pub doc_id: String,
    pub thinking: String,
    pub improved: String,
    pub raw_completion: String,
    pub finish_reason: FinishReason,
    pub attempt_count: u32,
}

impl RewriteOutput {
    pub fn from_completion(
        doc_id: &str,
        raw_completion: String,
        finish_reason: FinishReason,
        attempt_count: u32,
    ) -> Result<Self, RewriteError> {
        let (t, r) = parse_tagged(&raw_completion)?;
        let (thinking, improved) = (t.to_string(), r.to_string());
        Ok(RewriteOutput {
            doc_id: doc_id.to_string(),
            thinking,
            improved,
            raw_completion,
            finish_reason,
            attempt_count,
        })
    }
}
