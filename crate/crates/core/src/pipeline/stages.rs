use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde_json::{json, Value};

use super::{BoxError, PipelineConfig, Runner, Stage};
use crate::analysis::{
    self, report, AnalysisError, Bandwidth, CurveAxis, EmbeddingProvider, FileProvider, HttpProvider,
};
use crate::classifier::{
    read_scores, score_corpus, select_top_fraction, write_scores, ClassifierModel, ScoredDocument,
};
use crate::corpus::{
    deduplicate, ingest, read_documents, subset_corpus, CorpusManifest, IngestOptions, WriteOptions,
};
use crate::filter::filter_corpus;
use crate::mix::{
    budget_for_max_epochs, materialize, overlap_fraction, plan, BudgetReport, MaterializeOptions,
    MixPlan, MixSource, SourceBudget,
};
use crate::rewrite::{rewrite_corpus, GenerationConfig, RewriteOptions};

const SCORES_FILE: &str = "scores.jsonl";

/// Generation settings with the global seed filled in when none is set.
pub(crate) fn generation_config(cfg: &PipelineConfig) -> GenerationConfig {
    let mut g = cfg.generation.clone();
    g.seed.get_or_insert(cfg.seed);
    g
}

fn write_opts(runner: &mut Runner, stage: Stage) -> Result<WriteOptions, BoxError> {
    Ok(WriteOptions {
        docs_per_shard: runner.cfg.docs_per_shard,
        compress: runner.cfg.compress,
        provenance: Some(runner.provenance(stage)?),
        source_tokens: None,
    })
}

fn manifest(runner: &Runner, stage: Stage) -> Result<CorpusManifest, BoxError> {
    Ok(CorpusManifest::load(&runner.dir(stage))?)
}

fn corpus_name(cfg: &PipelineConfig, stage: Stage) -> String {
    match stage {
        Stage::Ingest => cfg.corpus_name.clone(),
        s => format!("{}-{}", cfg.corpus_name, s.name()),
    }
}

pub(crate) fn run(runner: &mut Runner, stage: Stage, resume: bool) -> Result<Value, BoxError> {
    let cfg = runner.cfg;
    let dir = runner.dir(stage);
    let name = corpus_name(cfg, stage);
    let write = if stage == Stage::Analyze {
        WriteOptions::default()
    } else {
        write_opts(runner, stage)?
    };
    match stage {
        Stage::Ingest => {
            let inputs = cfg.input_files()?;
            let opts = IngestOptions {
                tokenizer_id: cfg.tokenizer.clone(),
                id_field: cfg.id_field.clone(),
                corpus_name: name,
                write,
            };
            let r = ingest(&inputs, &opts, &dir)?;
            Ok(json!({
                "input_files": inputs,
                "documents": r.manifest.document_count,
                "total_tokens": r.manifest.total_tokens,
                "skipped": r.skipped,
                "skipped_samples": r.skipped_samples,
            }))
        }
        Stage::Dedup => {
            let input = manifest(runner, Stage::Ingest)?;
            let r = deduplicate(&input, &dir, &write)?;
            let mut m = r.manifest.clone();
            m.corpus_name = name;
            m.save()?;
            Ok(json!({
                "input_documents": r.input_documents,
                "removed": r.removed,
                "removed_tokens": r.removed_tokens,
                "documents": m.document_count,
                "total_tokens": m.total_tokens,
            }))
        }
        Stage::Filter => {
            let input = manifest(runner, Stage::Dedup)?;
            let r = filter_corpus(&input, &cfg.filter, &dir, Some(&dir.join("audit.jsonl")), &write)?;
            let mut m = r.manifest.clone();
            m.corpus_name = name;
            m.save()?;
            Ok(json!({
                "input_documents": r.input_documents,
                "passed": r.passed,
                "failed_by_rule": r.failed_by_rule,
                "total_tokens": m.total_tokens,
            }))
        }
        Stage::SelectRaw | Stage::SelectRewritten => {
            let (upstream, sel) = if stage == Stage::SelectRaw {
                (Stage::Filter, &cfg.raw)
            } else {
                (Stage::Rewrite, &cfg.rewritten)
            };
            let pool = manifest(runner, upstream)?;
            let model = ClassifierModel::load(&sel.classifier)?;
            let scores = score_corpus(&model, &pool)?;
            write_scores(&dir.join(SCORES_FILE), &scores)?;
            let ids = select_top_fraction(&scores, sel.top_fraction)?;
            let threshold = ids_threshold(&scores, &ids);
            let keep: HashSet<String> = ids.into_iter().collect();
            let m = subset_corpus(&pool, &keep, &dir, &name, &write)?;
            Ok(json!({
                "classifier_id": model.id(),
                "top_fraction": sel.top_fraction,
                "pool_documents": pool.document_count,
                "pool_tokens": pool.total_tokens,
                "selected_documents": m.document_count,
                "selected_tokens": m.total_tokens,
                "score_threshold": threshold,
            }))
        }
        Stage::Rewrite => {
            let input = manifest(runner, Stage::Filter)?;
            let g = generation_config(cfg);
            let opts = RewriteOptions {
                resume,
                corpus_name: Some(name),
                write,
            };
            let s = rewrite_corpus(&input, &g, &dir, &opts)?;
            log::info!(
                "rewrite: {} rewritten, {} failed, {} resumed, {} requests",
                s.rewritten,
                s.failed,
                s.resumed,
                s.requests
            );
            Ok(json!({
                "input_documents": input.document_count,
                "rewritten": s.rewritten,
                "failed": s.failed,
                "total_tokens": s.manifest.total_tokens,
                "model": g.model_name,
                "prompt_version": crate::rewrite::PROMPT_VERSION,
            }))
        }
        Stage::Mix => {
            let mix = mix_plan(runner)?;
            let opts = MaterializeOptions {
                allow_cap_violation: cfg.mix.allow_cap_violation,
                corpus_name: Some(name),
                write,
            };
            let out = materialize(&mix, &dir, &opts)?;
            let total: u64 = out.realized_tokens.values().sum();
            let shares: BTreeMap<&String, f64> = out
                .realized_tokens
                .iter()
                .map(|(k, v)| (k, if total == 0 { 0.0 } else { *v as f64 / total as f64 }))
                .collect();
            Ok(json!({
                "budget": out.report,
                "realized_tokens": out.realized_tokens,
                "realized_shares": shares,
                "documents": out.manifest.document_count,
                "overlap": selected_overlap(runner)?,
            }))
        }
        Stage::Analyze => analyze(runner, &dir),
        Stage::Budget => unreachable!("budget is read-only"),
    }
}

fn ids_threshold(scores: &[ScoredDocument], ids: &[String]) -> Option<f64> {
    let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
    scores
        .iter()
        .filter(|s| keep.contains(s.doc_id.as_str()))
        .map(|s| s.score)
        .min_by(f64::total_cmp)
}

fn mix_plan(runner: &Runner) -> Result<MixPlan, BoxError> {
    let cfg = runner.cfg;
    let sources = vec![
        MixSource {
            name: "raw".into(),
            manifest: manifest(runner, Stage::SelectRaw)?,
            weight: Some(cfg.mix.raw_weight),
        },
        MixSource {
            name: "rewritten".into(),
            manifest: manifest(runner, Stage::SelectRewritten)?,
            weight: Some(cfg.mix.rewritten_weight),
        },
    ];
    let budgets: Vec<SourceBudget> = sources
        .iter()
        .map(|s| SourceBudget {
            name: s.name.clone(),
            unique_tokens: s.manifest.total_tokens,
            weight: s.weight,
        })
        .collect();
    let token_budget = match cfg.mix.token_budget {
        Some(t) => t,
        None => budget_for_max_epochs(&budgets, cfg.mix.effective_max_epochs())?,
    };
    Ok(MixPlan {
        sources,
        token_budget,
        max_repeats: cfg.mix.max_repeats,
        seed: cfg.seed,
        share_mode: cfg.mix.share_mode,
    })
}

pub(crate) fn budget(runner: &mut Runner) -> Result<BudgetReport, BoxError> {
    Ok(plan(&mix_plan(runner)?)?)
}

fn selected_ids(runner: &Runner, stage: Stage) -> Result<HashSet<String>, BoxError> {
    Ok(read_documents(&manifest(runner, stage)?)?.into_iter().map(|d| d.id).collect())
}

fn selected_overlap(runner: &Runner) -> Result<Value, BoxError> {
    let raw = selected_ids(runner, Stage::SelectRaw)?;
    let rw = selected_ids(runner, Stage::SelectRewritten)?;
    Ok(json!({
        "raw_selected": raw.len(),
        "rewritten_selected": rw.len(),
        "shared_ids": raw.intersection(&rw).count(),
        "fraction_of_raw": overlap_fraction(&raw, &rw, false).ok(),
        "jaccard": overlap_fraction(&raw, &rw, true).ok(),
    }))
}

/// 1, 2, 5, 10, 20, 50, ... up to `max`, always ending at `max`.
fn ladder(max: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut base = 1u64;
    'outer: loop {
        for m in [1, 2, 5] {
            let v = base.saturating_mul(m);
            if v >= max {
                break 'outer;
            }
            out.push(v);
        }
        base = base.saturating_mul(10);
    }
    if max > 0 {
        out.push(max);
    }
    out
}

/// Skip analyses that are not defined for this data rather than failing the run.
fn soft(r: Result<Vec<std::path::PathBuf>, AnalysisError>, name: &str, skipped: &mut BTreeMap<String, String>) -> Result<Vec<std::path::PathBuf>, BoxError> {
    match r {
        Ok(p) => Ok(p),
        Err(e @ (AnalysisError::TooFewSamples { .. } | AnalysisError::DegenerateVariance(_))) => {
            log::warn!("analysis `{name}` skipped: {e}");
            skipped.insert(name.into(), e.to_string());
            Ok(Vec::new())
        }
        Err(e) => Err(e.into()),
    }
}

fn analyze(runner: &Runner, dir: &Path) -> Result<Value, BoxError> {
    let cfg = runner.cfg;
    let a = &cfg.analysis;
    let mut outputs = Vec::new();
    let mut skipped = BTreeMap::new();

    let raw_scores = read_scores(&runner.dir(Stage::SelectRaw).join(SCORES_FILE))?;
    let rw_scores = read_scores(&runner.dir(Stage::SelectRewritten).join(SCORES_FILE))?;

    if a.spearman {
        let pairs = analysis::pair_scores(&raw_scores, &rw_scores);
        let r = analysis::spearman(&pairs).and_then(|res| report::write_spearman(dir, &res, &pairs));
        outputs.extend(soft(r, "spearman", &mut skipped)?);
    }

    let mut similarities = None;
    if let Some(source) = &a.embeddings {
        let provider: Box<dyn EmbeddingProvider> = match source.strip_prefix("file:") {
            Some(f) => Box::new(FileProvider::load(Path::new(f))?),
            None => {
                let url = source.strip_prefix("http:").unwrap_or(source);
                let mut p = HttpProvider::new(url, &a.embedding_model);
                p.max_concurrency = cfg.generation.max_concurrency;
                p.api_key_env = cfg.generation.api_key_env.clone();
                Box::new(p)
            }
        };
        let raw = read_documents(&manifest(runner, Stage::Filter)?)?;
        let rw = read_documents(&manifest(runner, Stage::Rewrite)?)?;
        let rep = analysis::cosine_similarity_distribution(&raw, &rw, provider.as_ref())?;
        outputs.extend(report::write_similarity(dir, &rep)?);
        similarities = Some(rep.similarities.iter().map(|s| s.1).collect::<Vec<f64>>());
    }

    if a.kde {
        let mut series = Vec::new();
        let mut inputs: Vec<(&str, Vec<f64>)> = vec![
            ("raw_scores", raw_scores.iter().map(|s| s.score).collect()),
            ("rewritten_scores", rw_scores.iter().map(|s| s.score).collect()),
        ];
        if let Some(s) = similarities {
            inputs.push(("cosine_similarity", s));
        }
        for (label, xs) in inputs {
            let r = analysis::silverman_bandwidth(&xs).and_then(|h| {
                let grid = analysis::kde_grid(&xs, h, a.kde_points);
                analysis::kde(&xs, Bandwidth::Fixed(h), &grid)
            });
            match r {
                Ok((bandwidth, points)) => series.push(report::KdeReport {
                    label: label.into(),
                    bandwidth,
                    points,
                }),
                Err(e @ (AnalysisError::TooFewSamples { .. } | AnalysisError::DegenerateVariance(_))) => {
                    skipped.insert(format!("kde.{label}"), e.to_string());
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !series.is_empty() {
            outputs.extend(report::write_kde(dir, "kde", &series)?);
        }
    }

    if a.bigrams || a.lengths {
        let raw_sel = read_documents(&manifest(runner, Stage::SelectRaw)?)?;
        let rw_sel = read_documents(&manifest(runner, Stage::SelectRewritten)?)?;
        if a.bigrams {
            let max_docs = raw_sel.len().min(rw_sel.len()) as u64;
            let max_tokens = tokens(&raw_sel).min(tokens(&rw_sel));
            let doc_sizes = if a.bigram_document_sizes.is_empty() {
                ladder(max_docs)
            } else {
                a.bigram_document_sizes.clone()
            };
            let tok_sizes = if a.bigram_token_sizes.is_empty() {
                ladder(max_tokens)
            } else {
                a.bigram_token_sizes.clone()
            };
            for (label, docs) in [("raw", &raw_sel), ("rewritten", &rw_sel)] {
                for (axis, sizes) in [(CurveAxis::Documents, &doc_sizes), (CurveAxis::Tokens, &tok_sizes)] {
                    let axis_name = if axis == CurveAxis::Documents { "documents" } else { "tokens" };
                    let curve = analysis::diversity_curve(docs, axis, sizes, cfg.seed)?;
                    outputs.extend(report::write_curve(dir, &format!("bigrams_{label}_{axis_name}"), &curve)?);
                }
            }
        }
        if a.lengths {
            let mut rows = Vec::new();
            let pools = [
                ("raw_pool", Stage::Filter),
                ("rewritten_pool", Stage::Rewrite),
                ("raw_selected", Stage::SelectRaw),
                ("rewritten_selected", Stage::SelectRewritten),
            ];
            for (label, stage) in pools {
                let m = manifest(runner, stage)?;
                let counts: Vec<u64> = read_documents(&m)?.iter().map(|d| d.token_count).collect();
                match analysis::length_stats(&counts) {
                    Ok(s) => rows.push(report::LengthRow::new(label, &m.tokenizer_id, &s)),
                    Err(e) => {
                        skipped.insert(format!("lengths.{label}"), e.to_string());
                    }
                }
            }
            outputs.extend(report::write_lengths(dir, &rows)?);
        }
    }

    let overlap = selected_overlap(runner)?;
    let path = dir.join("overlap.json");
    crate::util::write_json_atomic(&path, &overlap)?;
    outputs.push(path);

    let names: Vec<String> = outputs
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    Ok(json!({
        "bigram_tokenization": analysis::BIGRAM_TOKENIZATION,
        "outputs": names,
        "skipped": skipped,
        "raw_scored": raw_scores.len(),
        "rewritten_scored": rw_scores.len(),
        "paired": analysis::pair_scores(&raw_scores, &rw_scores).len(),
    }))
}

fn tokens(docs: &[crate::corpus::Document]) -> u64 {
    docs.iter().map(|d| d.token_count).sum()
}
