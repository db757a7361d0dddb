use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;
use unicode_normalization::UnicodeNormalization;

use super::store::{read_documents, write_corpus, WriteOptions};
use super::{CorpusError, CorpusManifest, Document};
use crate::util::hash64;

/// NFC, lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize_for_dedup(text: &str) -> String {
    let nfc: String = text.nfc().collect::<String>().to_lowercase();
    nfc.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Serialize)]
pub struct DedupReport {
    pub manifest: CorpusManifest,
    pub input_documents: u64,
    pub removed: u64,
    pub removed_tokens: u64,
}

pub(crate) fn dedup_documents(docs: Vec<Document>) -> (Vec<Document>, Vec<Document>) {
    let mut seen = HashSet::with_capacity(docs.len());
    docs.into_iter()
        .partition(|d| seen.insert(hash64(normalize_for_dedup(&d.text).as_bytes())))
}

/// Exact deduplication on the hash of normalized text. The first document in
/// shard order survives.
pub fn deduplicate(
    manifest: &CorpusManifest,
    out_dir: &Path,
    opts: &WriteOptions,
) -> Result<DedupReport, CorpusError> {
    let docs = read_documents(manifest)?;
    let input_documents = docs.len() as u64;
    let (kept, removed) = dedup_documents(docs);
    let out = write_corpus(
        out_dir,
        &manifest.corpus_name,
        &manifest.tokenizer_id,
        &kept,
        opts,
    )?;
    Ok(DedupReport {
        manifest: out,
        input_documents,
        removed: removed.len() as u64,
        removed_tokens: removed.iter().map(|d| d.token_count).sum(),
    })
}
