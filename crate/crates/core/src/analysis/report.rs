//! CSV and JSON writers for analysis results. Every table is written
//! atomically; JSON files carry the same data plus summary fields.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    AnalysisError, DiversityCurve, EmbeddingVector, LengthStats, PairedScores, SimilarityReport,
    SpearmanResult,
};
use crate::util::{write_atomic, write_json_atomic};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| io_err(path)(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes).map_err(io_err(path))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, AnalysisError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| AnalysisError::BadInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| AnalysisError::BadInput {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnalysisError> {
    write_json_atomic(path, value).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, AnalysisError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| AnalysisError::BadInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanReport {
    #[serde(flatten)]
    pub result: SpearmanResult,
    pub pairs: Vec<PairedScores>,
}

/// `spearman.json` and `spearman_pairs.csv` under `dir`.
pub fn write_spearman(
    dir: &Path,
    result: &SpearmanResult,
    pairs: &[PairedScores],
) -> Result<Vec<PathBuf>, AnalysisError> {
    let json = dir.join("spearman.json");
    let csv = dir.join("spearman_pairs.csv");
    write_json(
        &json,
        &SpearmanReport {
            result: *result,
            pairs: pairs.to_vec(),
        },
    )?;
    write_csv(&csv, pairs)?;
    Ok(vec![json, csv])
}

pub fn read_spearman(dir: &Path) -> Result<SpearmanReport, AnalysisError> {
    read_json(&dir.join("spearman.json"))
}

#[derive(Serialize)]
struct CurveRow<'a> {
    axis: &'a str,
    sample_size: u64,
    unique_bigrams: u64,
    documents: u64,
    realized_tokens: u64,
    tokenization: &'a str,
    seed: u64,
}

/// `<stem>.json` and `<stem>.csv` for a diversity curve.
pub fn write_curve(dir: &Path, stem: &str, curve: &DiversityCurve) -> Result<Vec<PathBuf>, AnalysisError> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    write_json(&json, curve)?;
    let axis = match curve.axis {
        super::CurveAxis::Documents => "documents",
        super::CurveAxis::Tokens => "tokens",
    };
    let rows: Vec<CurveRow> = curve
        .points
        .iter()
        .map(|p| CurveRow {
            axis,
            sample_size: p.sample_size,
            unique_bigrams: p.unique_bigrams,
            documents: p.documents,
            realized_tokens: p.realized_tokens,
            tokenization: &curve.tokenization,
            seed: curve.seed,
        })
        .collect();
    write_csv(&csv, &rows)?;
    Ok(vec![json, csv])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub provider_id: String,
    pub pairs: usize,
    pub mean: Option<f64>,
    pub skipped_zero_norm: Vec<String>,
    pub failures: Vec<(String, String)>,
    pub similarities: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct SimilarityRow<'a> {
    doc_id: &'a str,
    cosine: f64,
}

/// `simcse.json`, `simcse.csv` and `embeddings.tsv` (both versions of every
/// paired document, keyed `<source_tag>:<id>`, for external projection).
pub fn write_similarity(dir: &Path, report: &SimilarityReport) -> Result<Vec<PathBuf>, AnalysisError> {
    let json = dir.join("simcse.json");
    let csv = dir.join("simcse.csv");
    let tsv = dir.join("embeddings.tsv");
    let n = report.similarities.len();
    let mean = (n > 0).then(|| report.similarities.iter().map(|s| s.1).sum::<f64>() / n as f64);
    write_json(
        &json,
        &SimilaritySummary {
            provider_id: report.provider_id.clone(),
            pairs: n,
            mean,
            skipped_zero_norm: report.skipped_zero_norm.clone(),
            failures: report.failures.clone(),
            similarities: report.similarities.clone(),
        },
    )?;
    let rows: Vec<SimilarityRow> = report
        .similarities
        .iter()
        .map(|(id, c)| SimilarityRow { doc_id: id, cosine: *c })
        .collect();
    write_csv(&csv, &rows)?;
    write_embeddings_tsv(&tsv, &report.vectors)?;
    Ok(vec![json, csv, tsv])
}

pub fn write_embeddings_tsv(path: &Path, vectors: &[EmbeddingVector]) -> Result<(), AnalysisError> {
    let mut out = String::new();
    for v in vectors {
        out.push_str(&v.doc_id);
        for x in &v.values {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeReport {
    pub label: String,
    pub bandwidth: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Serialize)]
struct KdeRow<'a> {
    label: &'a str,
    x: f64,
    density: f64,
}

/// `<stem>.json` and `<stem>.csv` holding one or more density series.
pub fn write_kde(dir: &Path, stem: &str, series: &[KdeReport]) -> Result<Vec<PathBuf>, AnalysisError> {
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    write_json(&json, &series)?;
    let rows: Vec<KdeRow> = series
        .iter()
        .flat_map(|s| {
            s.points.iter().map(move |&(x, density)| KdeRow {
                label: &s.label,
                x,
                density,
            })
        })
        .collect();
    write_csv(&csv, &rows)?;
    Ok(vec![json, csv])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub label: String,
    pub tokenizer_id: String,
    pub documents: u64,
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub median: u64,
}

impl LengthRow {
    pub fn new(label: &str, tokenizer_id: &str, s: &LengthStats) -> Self {
        LengthRow {
            label: label.into(),
            tokenizer_id: tokenizer_id.into(),
            documents: s.documents,
            min: s.min,
            max: s.max,
            mean: s.mean,
            median: s.median,
        }
    }
}

/// `lengths.json` and `lengths.csv`, one row per corpus.
pub fn write_lengths(dir: &Path, rows: &[LengthRow]) -> Result<Vec<PathBuf>, AnalysisError> {
    let json = dir.join("lengths.json");
    let csv = dir.join("lengths.csv");
    write_json(&json, &rows)?;
    write_csv(&csv, rows)?;
    Ok(vec![json, csv])
}
