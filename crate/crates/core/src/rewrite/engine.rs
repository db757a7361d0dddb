//! Corpus-scale rewrite runner: a bounded pool of in-flight requests, an
//! id-ordered reorder buffer feeding a single ledger writer, and resume from
//! the ledger.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use futures::StreamExt;
use serde::Serialize;

use super::client::{AttemptError, ChatClient, GenerationConfig};
use super::ledger::{FailureRecord, LedgerEntry, LedgerStatus, LedgerWriter};
use super::prompt::{build_prompt, PROMPT_VERSION};
use super::{
    read_ledger, scrub_tags, FinishReason, RewriteError, RewriteOutput, FAILURES_FILE, LEDGER_FILE,
};
use crate::corpus::{
    read_documents, write_corpus, CorpusManifest, Document, SourceTag, Tokenizer, WriteOptions,
};

#[derive(Debug, Clone, Default)]
pub struct RewriteOptions {
    /// Skip documents the ledger already marks completed.
    pub resume: bool,
    pub corpus_name: Option<String>,
    pub write: WriteOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct RewriteSummary {
    pub manifest: CorpusManifest,
    pub rewritten: u64,
    pub failed: u64,
    /// Documents taken from a previous run's ledger.
    pub resumed: u64,
    pub requests: u64,
}

enum Outcome {
    Done(LedgerEntry),
    Unreachable(String),
    OutOfBudget,
}

fn failed(doc_id: &str, attempts: u32, reason: String, status: Option<u16>) -> LedgerEntry {
    LedgerEntry {
        doc_id: doc_id.to_string(),
        status: LedgerStatus::Failed,
        attempt_count: attempts,
        finish_reason: Some(FinishReason::Error),
        raw_completion: None,
        truncated_input: false,
        reason: Some(reason),
        last_http_status: status,
    }
}

async fn process(client: &ChatClient, doc: &Document, tokenizer: &Tokenizer) -> Outcome {
    let cfg = client.config();
    let prompt = match build_prompt(doc, tokenizer, cfg.max_input_tokens) {
        Ok(p) => p,
        Err(e) => return Outcome::Done(failed(&doc.id, 0, e.to_string(), None)),
    };
    let max_attempts = cfg.retry_limit + 1;
    let mut last_status = None;
    let mut last_reason = String::new();
    let mut transport_only = true;
    for attempt in 1..=max_attempts {
        if !client.try_reserve() {
            return Outcome::OutOfBudget;
        }
        match client.complete_once(&prompt.text).await {
            Ok(c) => {
                transport_only = false;
                let finish = FinishReason::from_api(c.finish_reason.as_deref());
                match RewriteOutput::from_completion(&doc.id, c.content, finish, attempt) {
                    Ok(out) => {
                        return Outcome::Done(LedgerEntry {
                            doc_id: doc.id.clone(),
                            status: LedgerStatus::Completed,
                            attempt_count: attempt,
                            finish_reason: Some(out.finish_reason),
                            raw_completion: Some(out.raw_completion),
                            truncated_input: prompt.truncated,
                            reason: None,
                            last_http_status: Some(200),
                        })
                    }
                    Err(e) => {
                        last_status = Some(200);
                        last_reason = e.to_string();
                    }
                }
            }
            Err(AttemptError::Retryable { status, reason }) => {
                transport_only &= status.is_none();
                last_status = status;
                last_reason = reason;
            }
            Err(AttemptError::Fatal { status, reason }) => {
                return Outcome::Done(failed(&doc.id, attempt, reason, Some(status)));
            }
        }
        if attempt < max_attempts {
            tokio::time::sleep(cfg.backoff(attempt)).await;
        }
    }
    if transport_only && !client.endpoint_seen() {
        return Outcome::Unreachable(last_reason);
    }
    Outcome::Done(failed(&doc.id, max_attempts, last_reason, last_status))
}

fn rewritten_document(
    doc: &Document,
    entry: &LedgerEntry,
    tokenizer: &Tokenizer,
) -> Result<Document, RewriteError> {
    let raw = entry.raw_completion.clone().unwrap_or_default();
    let finish = entry.finish_reason.unwrap_or(FinishReason::Stop);
    let out = RewriteOutput::from_completion(&doc.id, raw, finish, entry.attempt_count)?;
    let text = scrub_tags(&out.improved);
    let mut metadata = doc.metadata.clone();
    metadata.insert("rewrite_prompt_version".into(), PROMPT_VERSION.into());
    metadata.insert(
        "finish_reason".into(),
        serde_json::to_value(finish).unwrap().as_str().unwrap().into(),
    );
    if entry.truncated_input {
        metadata.insert("truncated_input".into(), "true".into());
    }
    Ok(Document {
        id: doc.id.clone(),
        token_count: tokenizer.count(&text),
        text,
        url: doc.url.clone(),
        source_tag: SourceTag::Rewritten,
        metadata,
    })
}

/// Rewrite every document of `manifest` into a corpus at `out_dir`.
///
/// Writes `ledger.jsonl` (append-only, input order), `failures.jsonl`, and
/// the rewritten corpus, whose document order follows the input regardless
/// of completion order.
pub async fn rewrite_corpus_async(
    manifest: &CorpusManifest,
    cfg: &GenerationConfig,
    out_dir: &Path,
    opts: &RewriteOptions,
) -> Result<RewriteSummary, RewriteError> {
    let client = ChatClient::new(cfg)?;
    let tokenizer = Tokenizer::from_id(&manifest.tokenizer_id)?;
    let docs = read_documents(manifest)?;
    let ledger_path = out_dir.join(LEDGER_FILE);

    let mut entries: HashMap<String, LedgerEntry> = if opts.resume {
        read_ledger(&ledger_path)?
    } else {
        HashMap::new()
    };
    let is_done = |e: Option<&LedgerEntry>| e.is_some_and(|e| e.status == LedgerStatus::Completed);
    let resumed = docs.iter().filter(|d| is_done(entries.get(&d.id))).count() as u64;
    let todo: Vec<&Document> = docs.iter().filter(|d| !is_done(entries.get(&d.id))).collect();

    let mut ledger = LedgerWriter::open(&ledger_path, !opts.resume)?;
    let mut stream = futures::stream::iter(todo.iter().enumerate().map(|(i, doc)| {
        let client = &client;
        let tokenizer = &tokenizer;
        async move { (i, process(client, doc, tokenizer).await) }
    }))
    .buffer_unordered(cfg.max_concurrency);

    let mut reorder: BTreeMap<usize, Outcome> = BTreeMap::new();
    let mut next = 0usize;
    let mut out_of_budget = false;
    let mut completed_now = 0u64;
    while let Some((i, outcome)) = stream.next().await {
        reorder.insert(i, outcome);
        while let Some(outcome) = reorder.remove(&next) {
            next += 1;
            match outcome {
                Outcome::Done(entry) => {
                    ledger.append(&entry)?;
                    if entry.status == LedgerStatus::Completed {
                        completed_now += 1;
                    }
                    entries.insert(entry.doc_id.clone(), entry);
                }
                Outcome::OutOfBudget => out_of_budget = true,
                Outcome::Unreachable(reason) => {
                    return Err(RewriteError::EndpointUnreachable(reason));
                }
            }
        }
    }
    drop(stream);
    if out_of_budget {
        return Err(RewriteError::BudgetExceeded {
            cap: cfg.max_requests.unwrap_or(0),
            completed: resumed + completed_now,
        });
    }

    let mut out_docs = Vec::new();
    let mut failures = Vec::new();
    for doc in &docs {
        let entry = entries
            .get(&doc.id)
            .expect("every input document has a ledger entry");
        match entry.status {
            LedgerStatus::Completed => out_docs.push(rewritten_document(doc, entry, &tokenizer)?),
            LedgerStatus::Failed => failures.push(FailureRecord {
                doc_id: doc.id.clone(),
                reason: entry.reason.clone().unwrap_or_default(),
                attempt_count: entry.attempt_count,
                last_http_status: entry.last_http_status,
            }),
        }
    }

    let mut buf = Vec::new();
    for f in &failures {
        serde_json::to_writer(&mut buf, f).expect("failure record serializes");
        buf.push(b'\n');
    }
    let failures_path = out_dir.join(FAILURES_FILE);
    crate::util::write_atomic(&failures_path, &buf).map_err(|source| RewriteError::Io {
        path: failures_path,
        source,
    })?;

    let name = opts
        .corpus_name
        .clone()
        .unwrap_or_else(|| format!("{}-rewritten", manifest.corpus_name));
    let out = write_corpus(out_dir, &name, &manifest.tokenizer_id, &out_docs, &opts.write)?;
    Ok(RewriteSummary {
        manifest: out,
        rewritten: out_docs.len() as u64,
        failed: failures.len() as u64,
        resumed,
        requests: client.requests_issued(),
    })
}

/// Blocking wrapper around [`rewrite_corpus_async`].
pub fn rewrite_corpus(
    manifest: &CorpusManifest,
    cfg: &GenerationConfig,
    out_dir: &Path,
    opts: &RewriteOptions,
) -> Result<RewriteSummary, RewriteError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| RewriteError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
    rt.block_on(rewrite_corpus_async(manifest, cfg, out_dir, opts))
}
