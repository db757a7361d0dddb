use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::Duration;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::AnalysisError;
use crate::corpus::Document;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub doc_id: String,
    pub values: Vec<f64>,
    pub provider_id: String,
}

/// Source of sentence embeddings. Results are per document, in input order.
pub trait EmbeddingProvider {
    fn id(&self) -> String;
    fn embed(&self, docs: &[&Document]) -> Vec<Result<Vec<f64>, String>>;
}

/// Precomputed vectors from a TSV of `id<TAB>v1<TAB>v2...`. A document is
/// looked up as `<source_tag>:<id>` first, then as `<id>`, so one file can
/// hold both versions of a document.
pub struct FileProvider {
    path: PathBuf,
    table: HashMap<String, Vec<f64>>,
}

impl FileProvider {
    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let f = std::fs::File::open(path).map_err(|source| AnalysisError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut table = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|source| AnalysisError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let id = cols.next().unwrap_or_default().to_string();
            let values = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| AnalysisError::BadInput {
                    path: path.to_path_buf(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(AnalysisError::BadInput {
                    path: path.to_path_buf(),
                    reason: format!("line {}: empty or non-finite vector", i + 1),
                });
            }
            table.insert(id, values);
        }
        Ok(FileProvider {
            path: path.to_path_buf(),
            table,
        })
    }
}

impl EmbeddingProvider for FileProvider {
    fn id(&self) -> String {
        format!("file:{}", self.path.display())
    }

    fn embed(&self, docs: &[&Document]) -> Vec<Result<Vec<f64>, String>> {
        docs.iter()
            .map(|d| {
                let tagged = format!("{}:{}", d.source_tag.as_str(), d.id);
                self.table
                    .get(&tagged)
                    .or_else(|| self.table.get(&d.id))
                    .cloned()
                    .ok_or_else(|| format!("no vector for `{}`", d.id))
            })
            .collect()
    }
}

/// Calls an OpenAI-compatible `/v1/embeddings` endpoint with bounded concurrency.
pub struct HttpProvider {
    pub endpoint_url: String,
    pub model: String,
    pub max_concurrency: usize,
    pub retry_limit: u32,
    pub api_key_env: String,
}

impl HttpProvider {
    pub fn new(endpoint_url: &str, model: &str) -> Self {
        HttpProvider {
            endpoint_url: endpoint_url.to_string(),
            model: model.to_string(),
            max_concurrency: 16,
            retry_limit: 3,
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }

    fn url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        if base.ends_with("/embeddings") {
            base.to_string()
        } else if base.ends_with("/v1") {
            format!("{base}/embeddings")
        } else {
            format!("{base}/v1/embeddings")
        }
    }

    async fn one(&self, http: &reqwest::Client, key: Option<&str>, text: &str) -> Result<Vec<f64>, String> {
        let mut last = String::new();
        for attempt in 0..=self.retry_limit {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(50 << attempt.min(6))).await;
            }
            let mut req = http
                .post(self.url())
                .json(&json!({"model": self.model, "input": text}));
            if let Some(k) = key {
                req = req.bearer_auth(k);
            }
            let resp = match req.send().await {
                Ok(r) => r,
                Err(e) => {
                    last = format!("transport: {e}");
                    continue;
                }
            };
            let status = resp.status();
            if status.as_u16() == 429 || status.is_server_error() {
                last = format!("HTTP {status}");
                continue;
            }
            if !status.is_success() {
                return Err(format!("HTTP {status}"));
            }
            let body: serde_json::Value = resp.json().await.map_err(|e| e.to_string())?;
            return body["data"][0]["embedding"]
                .as_array()
                .and_then(|a| a.iter().map(|v| v.as_f64()).collect::<Option<Vec<f64>>>())
                .ok_or_else(|| "response has no embedding".to_string());
        }
        Err(last)
    }
}

impl EmbeddingProvider for HttpProvider {
    fn id(&self) -> String {
        format!("http:{}#{}", self.url(), self.model)
    }

    fn embed(&self, docs: &[&Document]) -> Vec<Result<Vec<f64>, String>> {
        let rt = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
            Ok(rt) => rt,
            Err(e) => return docs.iter().map(|_| Err(e.to_string())).collect(),
        };
        let http = reqwest::Client::new();
        let key = std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty());
        rt.block_on(async {
            futures::stream::iter(docs.iter().map(|d| self.one(&http, key.as_deref(), &d.text)))
                .buffered(self.max_concurrency.max(1))
                .collect::<Vec<_>>()
                .await
        })
    }
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub provider_id: String,
    pub similarities: Vec<(String, f64)>,
    pub skipped_zero_norm: Vec<String>,
    pub failures: Vec<(String, String)>,
    /// Vectors for both sides, for external projection.
    #[serde(skip)]
    pub vectors: Vec<EmbeddingVector>,
}

/// Per-id cosine between the embeddings of two versions of each document.
/// Documents are paired by id, in the order of `a`.
pub fn cosine_similarity_distribution(
    a: &[Document],
    b: &[Document],
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityReport, AnalysisError> {
    let by_id: HashMap<&str, &Document> = b.iter().map(|d| (d.id.as_str(), d)).collect();
    let pairs: Vec<(&Document, &Document)> = a
        .iter()
        .filter_map(|d| by_id.get(d.id.as_str()).map(|e| (d, *e)))
        .collect();
    let left: Vec<&Document> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<&Document> = pairs.iter().map(|p| p.1).collect();
    let ea = provider.embed(&left);
    let eb = provider.embed(&right);
    let pid = provider.id();

    let mut report = SimilarityReport {
        provider_id: pid.clone(),
        similarities: Vec::new(),
        skipped_zero_norm: Vec::new(),
        failures: Vec::new(),
        vectors: Vec::new(),
    };
    for ((da, db), (va, vb)) in pairs.iter().zip(ea.into_iter().zip(eb)) {
        let id = da.id.clone();
        let (va, vb) = match (va, vb) {
            (Ok(x), Ok(y)) => (x, y),
            (Err(e), _) | (_, Err(e)) => {
                report.failures.push((id, e));
                continue;
            }
        };
        if va.len() != vb.len() {
            return Err(AnalysisError::DimensionMismatch {
                id,
                a: va.len(),
                b: vb.len(),
            });
        }
        match cosine(&va, &vb) {
            Some(c) => report.similarities.push((id.clone(), c)),
            None => report.skipped_zero_norm.push(id.clone()),
        }
        for (d, v) in [(da, va), (db, vb)] {
            report.vectors.push(EmbeddingVector {
                doc_id: format!("{}:{}", d.source_tag.as_str(), d.id),
                values: v,
                provider_id: pid.clone(),
            });
        }
    }
    Ok(report)
}
