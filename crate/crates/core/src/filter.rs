//! Rule-based quality filters applied before any model-based scoring.
//!
//! Rules run in a fixed order and the first violation is reported:
//! min_length → max_length → dup_line_fraction → rep_ngram_fraction → url_blocklist.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_documents, write_corpus, CorpusError, CorpusManifest, Document, WriteOptions};

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("I/O failure writing {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterRule {
    MinLength,
    MaxLength,
    DupLineFraction,
    RepNgramFraction,
    UrlBlocklist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_tokens: u64,
    pub max_tokens: u64,
    pub max_dup_line_fraction: f64,
    pub max_rep_ngram_fraction: f64,
    pub rep_ngram_n: usize,
    pub url_blocklist: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_tokens: 50,
            max_tokens: 100_000,
            max_dup_line_fraction: 0.30,
            max_rep_ngram_fraction: 0.18,
            rep_ngram_n: 3,
            url_blocklist: BTreeSet::new(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidConfig(m.to_string()));
        if self.min_tokens > self.max_tokens {
            return bad("min_tokens exceeds max_tokens");
        }
        for (name, v) in [
            ("max_dup_line_fraction", self.max_dup_line_fraction),
            ("max_rep_ngram_fraction", self.max_rep_ngram_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(FilterError::InvalidConfig(format!("{name} must lie in [0,1]")));
            }
        }
        if self.rep_ngram_n < 2 {
            return bad("rep_ngram_n must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub doc_id: String,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_rule: Option<FilterRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_value: Option<f64>,
}

/// Fraction of non-empty lines that repeat an earlier line. Lines are
/// compared after trimming surrounding whitespace.
pub fn dup_line_fraction(text: &str) -> f64 {
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() <= 1 {
        return 0.0;
    }
    let mut seen = HashSet::with_capacity(lines.len());
    let dups = lines.iter().filter(|l| !seen.insert(**l)).count();
    dups as f64 / lines.len() as f64
}

/// Fraction of token positions covered by the most frequent token n-gram.
/// Ties on frequency are resolved toward the larger coverage.
pub fn rep_ngram_fraction(text: &str, n: usize) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if n == 0 || tokens.len() < n {
        return 0.0;
    }
    let mut starts: HashMap<&[&str], Vec<usize>> = HashMap::new();
    for (i, w) in tokens.windows(n).enumerate() {
        starts.entry(w).or_default().push(i);
    }
    let top = starts.values().map(Vec::len).max().unwrap_or(0);
    let covered = starts
        .values()
        .filter(|s| s.len() == top)
        .map(|s| {
            // occurrences are in increasing order, so overlaps merge left to right
            let mut total = 0;
            let mut reach = 0;
            for &st in s {
                let end = st + n;
                total += end - st.max(reach);
                reach = end;
            }
            total
        })
        .max()
        .unwrap_or(0);
    covered as f64 / tokens.len() as f64
}

fn host_of(url: &str) -> Option<String> {
    let parsed = url::Url::parse(url)
        .ok()
        .or_else(|| url::Url::parse(&format!("http://{url}")).ok())?;
    parsed.host_str().map(|h| h.trim_end_matches('.').to_ascii_lowercase())
}

fn url_blocked(url: &str, blocklist: &BTreeSet<String>) -> bool {
    let Some(host) = host_of(url) else {
        return false;
    };
    blocklist.iter().any(|d| {
        let d = d.trim_start_matches('.').to_ascii_lowercase();
        host == d || host.ends_with(&format!(".{d}"))
    })
}

/// Measurement for every rule, in evaluation order, with whether it failed.
pub fn evaluate_all(doc: &Document, cfg: &FilterConfig) -> Vec<(FilterRule, f64, bool)> {
    let tokens = doc.token_count as f64;
    let dup = dup_line_fraction(&doc.text);
    let rep = rep_ngram_fraction(&doc.text, cfg.rep_ngram_n);
    let mut out = vec![
        (FilterRule::MinLength, tokens, doc.token_count < cfg.min_tokens),
        (FilterRule::MaxLength, tokens, doc.token_count > cfg.max_tokens),
        (FilterRule::DupLineFraction, dup, dup > cfg.max_dup_line_fraction),
        (FilterRule::RepNgramFraction, rep, rep > cfg.max_rep_ngram_fraction),
    ];
    if let Some(url) = &doc.url {
        let blocked = url_blocked(url, &cfg.url_blocklist);
        out.push((FilterRule::UrlBlocklist, if blocked { 1.0 } else { 0.0 }, blocked));
    }
    out
}

pub fn evaluate(doc: &Document, cfg: &FilterConfig) -> FilterVerdict {
    let tokens = doc.token_count;
    let fail = |rule, v| FilterVerdict {
        doc_id: doc.id.clone(),
        passed: false,
        failed_rule: Some(rule),
        measured_value: Some(v),
    };
    if tokens < cfg.min_tokens {
        return fail(FilterRule::MinLength, tokens as f64);
    }
    if tokens > cfg.max_tokens {
        return fail(FilterRule::MaxLength, tokens as f64);
    }
    let dup = dup_line_fraction(&doc.text);
    if dup > cfg.max_dup_line_fraction {
        return fail(FilterRule::DupLineFraction, dup);
    }
    let rep = rep_ngram_fraction(&doc.text, cfg.rep_ngram_n);
    if rep > cfg.max_rep_ngram_fraction {
        return fail(FilterRule::RepNgramFraction, rep);
    }
    if let Some(url) = &doc.url {
        if url_blocked(url, &cfg.url_blocklist) {
            return fail(FilterRule::UrlBlocklist, 1.0);
        }
    }
    FilterVerdict {
        doc_id: doc.id.clone(),
        passed: true,
        failed_rule: None,
        measured_value: None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReport {
    pub manifest: CorpusManifest,
    pub input_documents: u64,
    pub passed: u64,
    pub failed_by_rule: std::collections::BTreeMap<String, u64>,
}

/// Filter a corpus, writing passing documents to `out_dir` and, optionally,
/// every verdict to a JSONL audit file.
pub fn filter_corpus(
    manifest: &CorpusManifest,
    cfg: &FilterConfig,
    out_dir: &Path,
    audit: Option<&Path>,
    opts: &WriteOptions,
) -> Result<FilterReport, FilterError> {
    cfg.validate()?;
    let docs = read_documents(manifest)?;
    let verdicts: Vec<FilterVerdict> = docs.par_iter().map(|d| evaluate(d, cfg)).collect();

    if let Some(path) = audit {
        let mut buf = Vec::new();
        for v in &verdicts {
            serde_json::to_writer(&mut buf, v).expect("verdict serializes");
            buf.write_all(b"\n").expect("vec write");
        }
        crate::util::write_atomic(path, &buf).map_err(|source| FilterError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }

    let mut failed_by_rule = std::collections::BTreeMap::new();
    for v in &verdicts {
        if let Some(rule) = v.failed_rule {
            let key = serde_json::to_value(rule).unwrap().as_str().unwrap().to_string();
            *failed_by_rule.entry(key).or_insert(0) += 1;
        }
    }
    let input_documents = docs.len() as u64;
    let kept: Vec<Document> = docs
        .into_iter()
        .zip(&verdicts)
        .filter(|(_, v)| v.passed)
        .map(|(d, _)| d)
        .collect();
    let out = write_corpus(out_dir, &manifest.corpus_name, &manifest.tokenizer_id, &kept, opts)?;
    Ok(FilterReport {
        passed: out.document_count,
        manifest: out,
        input_documents,
        failed_by_rule,
    })
}
