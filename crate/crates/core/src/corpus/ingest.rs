use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use super::store::{open_lines, write_corpus, WriteOptions};
use super::{CorpusError, CorpusManifest, Document, SourceTag, Tokenizer};
use crate::util::hash64_hex;

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub tokenizer_id: String,
    /// Record field holding a caller-supplied id. Records without it get a
    /// content-hash id.
    pub id_field: String,
    pub corpus_name: String,
    pub write: WriteOptions,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            tokenizer_id: super::tokenizer::WHITESPACE_ID.to_string(),
            id_field: "id".to_string(),
            corpus_name: "ingested".to_string(),
            write: WriteOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRecord {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub manifest: CorpusManifest,
    pub skipped: u64,
    /// First few skipped records, for diagnostics.
    pub skipped_samples: Vec<SkippedRecord>,
}

const MAX_SKIP_SAMPLES: usize = 100;

struct Parsed {
    line: usize,
    explicit_id: Option<String>,
    text: String,
    url: Option<String>,
    source_tag: SourceTag,
    metadata: BTreeMap<String, String>,
}

fn parse_record(line_no: usize, line: &str, id_field: &str) -> Result<Parsed, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let Value::Object(mut obj) = value else {
        return Err("record is not a JSON object".into());
    };
    let text = match obj.remove("text") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("`text` is not a string".into()),
        None => return Err("missing `text` field".into()),
    };
    let explicit_id = match obj.remove(id_field) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.is_empty() => return Err("empty id".into()),
        Some(Value::String(s)) => Some(s),
        Some(Value::Number(n)) => Some(n.to_string()),
        Some(_) => return Err(format!("`{id_field}` is not a string")),
    };
    let url = match obj.remove("url") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err("`url` is not a string".into()),
    };
    let source_tag = match obj.remove("source_tag") {
        None | Some(Value::Null) => SourceTag::Raw,
        Some(v) => serde_json::from_value(v).map_err(|_| "unknown `source_tag`".to_string())?,
    };
    let metadata = match obj.remove("metadata") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m
            .into_iter()
            .map(|(k, v)| match v {
                Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect(),
        Some(_) => return Err("`metadata` is not an object".into()),
    };
    Ok(Parsed {
        line: line_no,
        explicit_id,
        text,
        url,
        source_tag,
        metadata,
    })
}

fn parse_file(path: &Path, id_field: &str) -> Result<(Vec<Parsed>, Vec<SkippedRecord>), CorpusError> {
    let reader = open_lines(path)?;
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(i + 1, &line, id_field) {
            Ok(p) => ok.push(p),
            Err(reason) => bad.push(SkippedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            }),
        }
    }
    Ok((ok, bad))
}

/// Read newline-delimited JSON records (optionally gzipped) from `inputs`,
/// assign stable ids, count tokens, and write a sharded corpus to `out_dir`.
///
/// Inputs are processed in lexicographic path order. Malformed records are
/// skipped and counted; zero valid records is an error.
pub fn ingest(
    inputs: &[PathBuf],
    opts: &IngestOptions,
    out_dir: &Path,
) -> Result<IngestReport, CorpusError> {
    let tokenizer = Tokenizer::from_id(&opts.tokenizer_id)?;
    let mut paths = inputs.to_vec();
    paths.sort();
    paths.dedup();

    let parsed: Vec<(Vec<Parsed>, Vec<SkippedRecord>)> = paths
        .par_iter()
        .map(|p| parse_file(p, &opts.id_field))
        .collect::<Result<_, _>>()?;

    // id assignment is sequential so it does not depend on scheduling
    let mut used: HashSet<String> = HashSet::new();
    let mut skipped_all = Vec::new();
    let mut pending = Vec::new();
    for ((records, skipped), path) in parsed.into_iter().zip(&paths) {
        skipped_all.extend(skipped);
        for p in records {
            let id = match p.explicit_id.clone() {
                Some(id) => {
                    if used.contains(&id) {
                        skipped_all.push(SkippedRecord {
                            path: path.clone(),
                            line: p.line,
                            reason: format!("duplicate id `{id}`"),
                        });
                        continue;
                    }
                    id
                }
                None => {
                    let base = hash64_hex(p.text.as_bytes());
                    let mut id = base.clone();
                    let mut k = 1;
                    while used.contains(&id) {
                        id = format!("{base}-{k}");
                        k += 1;
                    }
                    id
                }
            };
            used.insert(id.clone());
            pending.push((id, p));
        }
    }
    if pending.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }

    let docs: Vec<Document> = pending
        .into_par_iter()
        .map(|(id, p)| Document {
            id,
            token_count: tokenizer.count(&p.text),
            text: p.text,
            url: p.url,
            source_tag: p.source_tag,
            metadata: p.metadata,
        })
        .collect();

    let manifest = write_corpus(
        out_dir,
        &opts.corpus_name,
        &opts.tokenizer_id,
        &docs,
        &opts.write,
    )?;
    let skipped = skipped_all.len() as u64;
    skipped_all.truncate(MAX_SKIP_SAMPLES);
    Ok(IngestReport {
        manifest,
        skipped,
        skipped_samples: skipped_all,
    })
}
