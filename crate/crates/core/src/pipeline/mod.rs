//! End-to-end driver: a fixed stage graph over one config file, with
//! content-addressed completion markers so reruns skip finished work.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::Provenance;
use crate::mix::BudgetReport;
use crate::util::{sha256_file, sha256_hex, write_json_atomic};

pub use config::{
    has_errors, AnalysisConfig, Diagnostic, MixConfig, PipelineConfig, SelectConfig, Severity,
};

pub const SUCCESS_MARKER: &str = "_SUCCESS.json";
const STARTED_MARKER: &str = "_STARTED";
pub const REPORT_FILE: &str = "report.json";
pub const RUN_FILE: &str = "run.json";

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    ConfigInvalid(Vec<Diagnostic>),
    #[error("cannot parse config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },
    #[error("stage `{stage}` needs `{upstream}`, which has not completed with the current config")]
    MissingUpstream { stage: Stage, upstream: Stage },
    #[error("stage `{stage}` failed: {source}")]
    StageFailed {
        stage: Stage,
        #[source]
        source: BoxError,
    },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Dedup,
    Filter,
    SelectRaw,
    Rewrite,
    SelectRewritten,
    Mix,
    Analyze,
    /// Read-only: prints the budget plan for the mix without writing anything.
    Budget,
}

impl Stage {
    /// Stages that produce artifacts, in execution order.
    pub const PIPELINE: [Stage; 8] = [
        Stage::Ingest,
        Stage::Dedup,
        Stage::Filter,
        Stage::SelectRaw,
        Stage::Rewrite,
        Stage::SelectRewritten,
        Stage::Mix,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Dedup => "dedup",
            Stage::Filter => "filter",
            Stage::SelectRaw => "select-raw",
            Stage::Rewrite => "rewrite",
            Stage::SelectRewritten => "select-rewritten",
            Stage::Mix => "mix",
            Stage::Analyze => "analyze",
            Stage::Budget => "budget",
        }
    }

    /// Directory under the output root.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Analyze => "reports",
            s => s.name(),
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Dedup => &[Stage::Ingest],
            Stage::Filter => &[Stage::Dedup],
            Stage::SelectRaw | Stage::Rewrite => &[Stage::Filter],
            Stage::SelectRewritten => &[Stage::Rewrite],
            Stage::Mix | Stage::Budget => &[Stage::SelectRaw, Stage::SelectRewritten],
            Stage::Analyze => &[Stage::Filter, Stage::SelectRaw, Stage::Rewrite, Stage::SelectRewritten],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::PIPELINE
            .iter()
            .chain(std::iter::once(&Stage::Budget))
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run only these stages; their upstream artifacts must already exist.
    pub stages: Option<Vec<Stage>>,
    /// Stop after this stage.
    pub until: Option<Stage>,
    /// Rerun requested stages even when their markers are current.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub key: String,
    pub status: StageStatus,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunOutcome {
    pub stages: Vec<StageOutcome>,
    pub budget: Option<BudgetReport>,
}

#[derive(Serialize, Deserialize)]
struct Marker {
    stage: Stage,
    key: String,
    tool_version: String,
}

pub(crate) struct Runner<'a> {
    pub(crate) cfg: &'a PipelineConfig,
    keys: BTreeMap<Stage, String>,
}

impl<'a> Runner<'a> {
    pub(crate) fn dir(&self, stage: Stage) -> PathBuf {
        self.cfg.output_root.join(stage.dir_name())
    }

    pub(crate) fn provenance(&mut self, stage: Stage) -> Result<Provenance, PipelineError> {
        Ok(Provenance::new(self.key(stage)?, stage.name()))
    }

    /// Content address of a stage: its own parameters plus the keys of
    /// everything upstream, so any upstream change invalidates it.
    pub(crate) fn key(&mut self, stage: Stage) -> Result<String, PipelineError> {
        if let Some(k) = self.keys.get(&stage) {
            return Ok(k.clone());
        }
        let upstream: Vec<String> = stage
            .upstream()
            .iter()
            .map(|&u| self.key(u))
            .collect::<Result<_, _>>()?;
        let cfg = self.cfg;
        let shard = json!({"docs_per_shard": cfg.docs_per_shard, "compress": cfg.compress});
        let params = match stage {
            Stage::Ingest => {
                let files = cfg.input_files()?;
                let mut inputs = Vec::new();
                for f in &files {
                    let h = sha256_file(f).map_err(|e| PipelineError::io(f, e))?;
                    inputs.push(json!([f, h]));
                }
                json!({
                    "inputs": inputs,
                    "tokenizer": cfg.tokenizer,
                    "id_field": cfg.id_field,
                    "corpus_name": cfg.corpus_name,
                    "shards": shard,
                })
            }
            Stage::Dedup => json!({"shards": shard}),
            Stage::Filter => json!({"filter": cfg.filter, "shards": shard}),
            Stage::SelectRaw | Stage::SelectRewritten => {
                let sel = if stage == Stage::SelectRaw { &cfg.raw } else { &cfg.rewritten };
                let model = sha256_file(&sel.classifier).map_err(|e| PipelineError::io(&sel.classifier, e))?;
                json!({"model_sha256": model, "top_fraction": sel.top_fraction, "shards": shard})
            }
            Stage::Rewrite => {
                let g = stages::generation_config(cfg);
                // transport and pacing knobs do not change what gets generated
                json!({
                    "model": g.model_name,
                    "temperature": g.temperature,
                    "top_p": g.top_p,
                    "max_tokens": g.max_tokens,
                    "max_input_tokens": g.max_input_tokens,
                    "seed": g.seed,
                    "prompt": crate::rewrite::PROMPT_VERSION,
                    "shards": shard,
                })
            }
            Stage::Mix | Stage::Budget => json!({"mix": cfg.mix, "seed": cfg.seed, "shards": shard}),
            Stage::Analyze => {
                let emb = match cfg.analysis.embeddings.as_deref().and_then(|e| e.strip_prefix("file:")) {
                    Some(f) => Some(sha256_file(Path::new(f)).map_err(|e| PipelineError::io(Path::new(f), e))?),
                    None => None,
                };
                json!({"analysis": cfg.analysis, "embedding_sha256": emb, "seed": cfg.seed})
            }
        };
        let doc = json!({
            "stage": stage.name(),
            "tool_version": crate::TOOL_VERSION,
            "upstream": upstream,
            "params": params,
        });
        let key = sha256_hex(&serde_json::to_vec(&doc).expect("key serializes"));
        self.keys.insert(stage, key.clone());
        Ok(key)
    }

    pub(crate) fn is_complete(&mut self, stage: Stage) -> Result<bool, PipelineError> {
        let key = self.key(stage)?;
        let path = self.dir(stage).join(SUCCESS_MARKER);
        let Ok(bytes) = std::fs::read(&path) else {
            return Ok(false);
        };
        Ok(serde_json::from_slice::<Marker>(&bytes).is_ok_and(|m| m.key == key))
    }

    fn require_upstream(&mut self, stage: Stage) -> Result<(), PipelineError> {
        for &u in stage.upstream() {
            if !self.is_complete(u)? {
                return Err(PipelineError::MissingUpstream { stage, upstream: u });
            }
        }
        Ok(())
    }

    /// Clear a stage directory for a fresh attempt. A partial rewrite from an
    /// interrupted attempt with the same key is kept so its ledger can resume.
    fn prepare(&mut self, stage: Stage, force: bool) -> Result<bool, PipelineError> {
        let key = self.key(stage)?;
        let dir = self.dir(stage);
        let started = dir.join(STARTED_MARKER);
        let resumable = stage == Stage::Rewrite
            && !force
            && std::fs::read_to_string(&started).is_ok_and(|k| k.trim() == key);
        if !resumable && dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let _ = std::fs::remove_file(dir.join(SUCCESS_MARKER));
        std::fs::write(&started, format!("{key}\n")).map_err(|e| PipelineError::io(&started, e))?;
        Ok(resumable)
    }

    fn finish(&mut self, stage: Stage, report: serde_json::Value) -> Result<(), PipelineError> {
        let dir = self.dir(stage);
        let prov = self.provenance(stage)?;
        let path = dir.join(REPORT_FILE);
        write_json_atomic(&path, &json!({"provenance": prov, "report": report}))
            .map_err(|e| PipelineError::io(&path, e))?;
        let marker = Marker {
            stage,
            key: prov.config_hash,
            tool_version: crate::TOOL_VERSION.into(),
        };
        let path = dir.join(SUCCESS_MARKER);
        write_json_atomic(&path, &marker).map_err(|e| PipelineError::io(&path, e))?;
        let started = dir.join(STARTED_MARKER);
        std::fs::remove_file(&started).map_err(|e| PipelineError::io(&started, e))
    }
}

/// Check the config, then run the requested stages in dependency order.
/// Completed stages whose key is unchanged are skipped unless `force`.
pub fn run_pipeline(cfg: &PipelineConfig, opts: &RunOptions) -> Result<RunOutcome, PipelineError> {
    let diags = cfg.validate();
    if has_errors(&diags) {
        return Err(PipelineError::ConfigInvalid(
            diags.into_iter().filter(|d| d.severity == Severity::Error).collect(),
        ));
    }
    for d in &diags {
        log::warn!("{d}");
    }

    let mut runner = Runner {
        cfg,
        keys: BTreeMap::new(),
    };
    let explicit = opts.stages.is_some();
    let mut wanted: Vec<Stage> = opts.stages.clone().unwrap_or_else(|| Stage::PIPELINE.to_vec());
    wanted.sort();
    wanted.dedup();
    if let Some(until) = opts.until {
        wanted.retain(|&s| s <= until || s == Stage::Budget);
    }

    let mut outcome = RunOutcome::default();
    for stage in wanted {
        if stage == Stage::Budget {
            runner.require_upstream(stage)?;
            let report = stages::budget(&mut runner).map_err(|source| PipelineError::StageFailed { stage, source })?;
            outcome.budget = Some(report);
            continue;
        }
        let key = runner.key(stage)?;
        if !opts.force && runner.is_complete(stage)? {
            log::info!("{stage}: up to date, skipping");
            outcome.stages.push(StageOutcome {
                stage,
                key,
                status: StageStatus::Skipped,
            });
            continue;
        }
        runner.require_upstream(stage)?;
        let resume = runner.prepare(stage, opts.force)?;
        log::info!("{stage}: running{}", if resume { " (resuming)" } else { "" });
        let report = stages::run(&mut runner, stage, resume).map_err(|source| PipelineError::StageFailed { stage, source })?;
        runner.finish(stage, report)?;
        outcome.stages.push(StageOutcome {
            stage,
            key,
            status: StageStatus::Ran,
        });
    }

    if !explicit || outcome.stages.iter().any(|s| s.status == StageStatus::Ran) {
        let mut keys = BTreeMap::new();
        for stage in Stage::PIPELINE {
            if runner.is_complete(stage)? {
                keys.insert(stage.name(), runner.key(stage)?);
            }
        }
        let path = cfg.output_root.join(RUN_FILE);
        let run = json!({
            "config_hash": cfg.config_hash(),
            "tool_version": crate::TOOL_VERSION,
            "seed": cfg.seed,
            "stages": keys,
        });
        write_json_atomic(&path, &run).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(outcome)
}
