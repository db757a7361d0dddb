use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::corpus::{Tokenizer, WHITESPACE_ID};
use crate::filter::FilterConfig;
use crate::mix::ShareMode;
use crate::rewrite::GenerationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub classifier: PathBuf,
    #[serde(default = "default_fraction")]
    pub top_fraction: f64,
}

fn default_fraction() -> f64 {
    0.10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    pub raw_weight: f64,
    pub rewritten_weight: f64,
    /// Absolute token budget. Exclusive with `target_max_epochs`.
    pub token_budget: Option<u64>,
    /// Derive the budget so the most-repeated source sees this many epochs.
    pub target_max_epochs: Option<f64>,
    pub max_repeats: u32,
    pub share_mode: ShareMode,
    pub allow_cap_violation: bool,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            raw_weight: 0.5,
            rewritten_weight: 0.5,
            token_budget: None,
            target_max_epochs: None,
            max_repeats: 4,
            share_mode: ShareMode::Tokens,
            allow_cap_violation: false,
        }
    }
}

impl MixConfig {
    /// Epoch target used when no explicit budget is given.
    pub fn effective_max_epochs(&self) -> f64 {
        self.target_max_epochs.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub spearman: bool,
    pub bigrams: bool,
    pub lengths: bool,
    pub kde: bool,
    /// `file:<tsv>` or `http:<endpoint>`; enables the embedding similarity report.
    pub embeddings: Option<String>,
    pub embedding_model: String,
    /// Document-axis sample sizes; derived from the corpus when empty.
    pub bigram_document_sizes: Vec<u64>,
    pub bigram_token_sizes: Vec<u64>,
    pub kde_points: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            spearman: true,
            bigrams: true,
            lengths: true,
            kde: true,
            embeddings: None,
            embedding_model: "princeton-nlp/sup-simcse-bert-base-uncased".into(),
            bigram_document_sizes: Vec::new(),
            bigram_token_sizes: Vec::new(),
            kde_points: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_root: PathBuf,
    /// Glob patterns of JSONL(.gz) input files.
    pub inputs: Vec<String>,
    #[serde(default = "default_tokenizer")]
    pub tokenizer: String,
    #[serde(default = "default_corpus_name")]
    pub corpus_name: String,
    #[serde(default = "default_id_field")]
    pub id_field: String,
    #[serde(default = "default_shard")]
    pub docs_per_shard: usize,
    #[serde(default = "default_true")]
    pub compress: bool,
    #[serde(default)]
    pub filter: FilterConfig,
    pub raw: SelectConfig,
    pub rewritten: SelectConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub mix: MixConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_tokenizer() -> String {
    WHITESPACE_ID.into()
}
fn default_corpus_name() -> String {
    "corpus".into()
}
fn default_id_field() -> String {
    "id".into()
}
fn default_shard() -> usize {
    50_000
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Dotted path of the offending field, e.g. `raw.top_fraction`.
    pub path: String,
    pub severity: Severity,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() || p.as_os_str().is_empty() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parse a TOML or JSON config. Relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: PipelineConfig = if is_json {
            serde_json::from_str(&text).map_err(|e| PipelineError::ConfigParse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::ConfigParse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.output_root = resolve(base, &self.output_root);
        self.raw.classifier = resolve(base, &self.raw.classifier);
        self.rewritten.classifier = resolve(base, &self.rewritten.classifier);
        for g in &mut self.inputs {
            if !Path::new(g.as_str()).is_absolute() {
                *g = base.join(g.as_str()).to_string_lossy().into_owned();
            }
        }
        if let Some(e) = &self.analysis.embeddings {
            if let Some(p) = e.strip_prefix("file:") {
                self.analysis.embeddings = Some(format!("file:{}", resolve(base, Path::new(p)).display()));
            }
        }
        if let Some(p) = self.tokenizer.strip_prefix("subword:") {
            self.tokenizer = format!("subword:{}", resolve(base, Path::new(p)).display());
        }
    }

    /// Input files matched by the globs, sorted and deduplicated.
    pub fn input_files(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let mut out = Vec::new();
        for (i, g) in self.inputs.iter().enumerate() {
            let paths = glob::glob(g).map_err(|e| PipelineError::ConfigParse {
                path: PathBuf::from(format!("inputs[{i}]")),
                reason: e.to_string(),
            })?;
            out.extend(paths.filter_map(Result::ok).filter(|p| p.is_file()));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Hash of everything that affects artifacts. The output location is
    /// excluded so that identical runs in different directories agree.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_root = PathBuf::new();
        c.generation.endpoint_url.clear();
        let json = serde_json::to_vec(&c).expect("config serializes");
        crate::util::sha256_hex(&json)
    }

    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut d = Vec::new();
        let mut err = |path: &str, msg: String| {
            d.push(Diagnostic {
                path: path.into(),
                severity: Severity::Error,
                message: msg,
            })
        };

        if self.output_root.as_os_str().is_empty() {
            err("output_root", "must not be empty".into());
        }
        if self.inputs.is_empty() {
            err("inputs", "at least one input pattern is required".into());
        }
        for (i, g) in self.inputs.iter().enumerate() {
            match glob::glob(g) {
                Err(e) => err(&format!("inputs[{i}]"), format!("bad pattern: {e}")),
                Ok(paths) => {
                    if !paths.filter_map(Result::ok).any(|p| p.is_file()) {
                        err(&format!("inputs[{i}]"), format!("`{g}` matches no files"));
                    }
                }
            }
        }
        if let Err(e) = Tokenizer::from_id(&self.tokenizer) {
            err("tokenizer", e.to_string());
        }
        if self.id_field.is_empty() {
            err("id_field", "must not be empty".into());
        }
        if self.docs_per_shard == 0 {
            err("docs_per_shard", "must be positive".into());
        }
        if let Err(e) = self.filter.validate() {
            err("filter", e.to_string());
        }
        for (name, s) in [("raw", &self.raw), ("rewritten", &self.rewritten)] {
            if !s.classifier.is_file() {
                err(
                    &format!("{name}.classifier"),
                    format!("model file {} does not exist", s.classifier.display()),
                );
            }
            if !(s.top_fraction > 0.0 && s.top_fraction <= 1.0) {
                err(
                    &format!("{name}.top_fraction"),
                    format!("must be in (0, 1], got {}", s.top_fraction),
                );
            }
        }
        if let Err(e) = self.generation.validate() {
            err("generation", e.to_string());
        }

        let m = &self.mix;
        for (path, w) in [("mix.raw_weight", m.raw_weight), ("mix.rewritten_weight", m.rewritten_weight)] {
            if !(w.is_finite() && w >= 0.0) {
                err(path, format!("weight must be finite and >= 0, got {w}"));
            }
        }
        let sum = m.raw_weight + m.rewritten_weight;
        if sum == 0.0 {
            err("mix", "all weights are zero".into());
        }
        if m.token_budget.is_some() && m.target_max_epochs.is_some() {
            err("mix", "set either token_budget or target_max_epochs, not both".into());
        }
        if m.token_budget == Some(0) {
            err("mix.token_budget", "must be positive".into());
        }
        if let Some(e) = m.target_max_epochs {
            if !(e.is_finite() && e > 0.0) {
                err("mix.target_max_epochs", format!("must be positive, got {e}"));
            }
        }
        if m.max_repeats == 0 {
            err("mix.max_repeats", "must be at least 1".into());
        }

        let a = &self.analysis;
        if let Some(p) = &a.embeddings {
            if let Some(f) = p.strip_prefix("file:") {
                if !Path::new(f).is_file() {
                    err("analysis.embeddings", format!("embedding table {f} does not exist"));
                }
            } else if p.strip_prefix("http:").is_none_or(|u| u.is_empty()) {
                err("analysis.embeddings", format!("expected `file:<path>` or `http:<url>`, got `{p}`"));
            }
        }
        for (path, sizes) in [
            ("analysis.bigram_document_sizes", &a.bigram_document_sizes),
            ("analysis.bigram_token_sizes", &a.bigram_token_sizes),
        ] {
            if sizes.first() == Some(&0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
                err(path, "sizes must be positive and strictly increasing".into());
            }
        }
        if a.kde && a.kde_points < 2 {
            err("analysis.kde_points", "need at least 2 grid points".into());
        }

        if sum.is_finite() && sum > 0.0 && (sum - 1.0).abs() > 1e-9 {
            d.push(Diagnostic {
                path: "mix".into(),
                severity: Severity::Warning,
                message: format!("weights sum to {sum}; they will be normalized"),
            });
        }
        d
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}
