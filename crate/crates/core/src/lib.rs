//! Corpus recycling pipeline: turn a pool of moderate-quality web documents
//! into a training-ready mixture of filtered raw text and LLM-rewritten text.
//!
//! Stages, in dependency order:
//! ingest → dedup → heuristic filter → score + select (raw) and
//! rewrite → score + select (rewritten) → mix → analyze.

pub mod analysis;
pub mod classifier;
pub mod corpus;
pub mod filter;
pub mod mix;
pub mod pipeline;
pub mod rewrite;
pub mod util;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub use corpus::{CorpusError, CorpusManifest, Document, SourceTag, Tokenizer};
