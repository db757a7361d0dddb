//! Token budgets, epoch schedules and ratio-weighted mixing.
//!
//! For a source with `D` unique tokens and normalized weight `w` under a
//! budget of `T` tokens seen, the source contributes `w·T` tokens, i.e.
//! `w·T / D` epochs.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{read_documents, write_corpus, CorpusError, CorpusManifest, Document, WriteOptions};
use crate::util::{hash64, rng, shuffle};

#[derive(Debug, Error)]
pub enum MixError {
    #[error("source `{0}` is empty")]
    EmptySource(String),
    #[error("all mix weights are zero")]
    ZeroWeightAll,
    #[error("invalid weight for source `{0}`")]
    InvalidWeight(String),
    #[error("either every source has a weight or none does")]
    PartialWeights,
    #[error("token budget must be at least 1")]
    ZeroBudget,
    #[error("no sources in mix plan")]
    NoSources,
    #[error("plan repeats a source {max_epochs:.3} times, above the cap of {max_repeats}")]
    CapViolated { max_epochs: f64, max_repeats: u32 },
    #[error("reference id set is empty")]
    EmptyReference,
    #[error("invalid mix plan {path}: {reason}")]
    InvalidPlan { path: PathBuf, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How per-source shares are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareMode {
    #[default]
    Tokens,
    Documents,
}

/// Size and weight of one source, enough for budget arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBudget {
    pub name: String,
    pub unique_tokens: u64,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceReport {
    pub name: String,
    pub unique_tokens: u64,
    pub weight: f64,
    /// `w·T`, to 3 decimals.
    pub target_tokens: f64,
    /// `w·T / D`, to 3 decimals.
    pub epochs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub token_budget: u64,
    pub max_repeats: u32,
    pub per_source: Vec<SourceReport>,
    pub max_epochs: f64,
    pub cap_violated: bool,
    /// True when the given weights did not already sum to 1.
    pub weights_normalized: bool,
}

fn ratio(x: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

fn round3(r: &BigRational) -> f64 {
    let scaled = (r * ratio(1000)).round();
    scaled.to_f64().unwrap_or(f64::NAN) / 1000.0
}

pub(crate) fn normalized_weights(sources: &[(String, Option<f64>)]) -> Result<Vec<BigRational>, MixError> {
    if sources.is_empty() {
        return Err(MixError::NoSources);
    }
    let given = sources.iter().filter(|s| s.1.is_some()).count();
    let raw: Vec<BigRational> = if given == 0 {
        vec![ratio(1); sources.len()]
    } else if given < sources.len() {
        return Err(MixError::PartialWeights);
    } else {
        sources
            .iter()
            .map(|(name, w)| {
                let w = w.unwrap();
                if !w.is_finite() || w < 0.0 {
                    return Err(MixError::InvalidWeight(name.clone()));
                }
                BigRational::from_float(w).ok_or_else(|| MixError::InvalidWeight(name.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    let sum: BigRational = raw.iter().cloned().sum();
    if sum.is_zero() {
        return Err(MixError::ZeroWeightAll);
    }
    Ok(raw.into_iter().map(|w| w / &sum).collect())
}

/// Budget report for sources of the given sizes. Missing weights on every
/// source mean equal weights.
pub fn plan_budget(
    sources: &[SourceBudget],
    token_budget: u64,
    max_repeats: u32,
) -> Result<BudgetReport, MixError> {
    if token_budget == 0 {
        return Err(MixError::ZeroBudget);
    }
    if let Some(s) = sources.iter().find(|s| s.unique_tokens == 0) {
        return Err(MixError::EmptySource(s.name.clone()));
    }
    let named: Vec<(String, Option<f64>)> =
        sources.iter().map(|s| (s.name.clone(), s.weight)).collect();
    let weights = normalized_weights(&named)?;
    let raw_sum: f64 = sources.iter().filter_map(|s| s.weight).sum();
    let weights_normalized =
        sources.iter().all(|s| s.weight.is_some()) && (raw_sum - 1.0).abs() > 1e-9;

    let t = ratio(token_budget);
    let cap = ratio(max_repeats as u64);
    let mut per_source = Vec::new();
    let mut max_e = BigRational::zero();
    for (s, w) in sources.iter().zip(&weights) {
        let target = w * &t;
        let epochs = &target / ratio(s.unique_tokens);
        if epochs > max_e {
            max_e = epochs.clone();
        }
        per_source.push(SourceReport {
            name: s.name.clone(),
            unique_tokens: s.unique_tokens,
            weight: w.to_f64().unwrap_or(f64::NAN),
            target_tokens: round3(&target),
            epochs: round3(&epochs),
        });
    }
    Ok(BudgetReport {
        token_budget,
        max_repeats,
        per_source,
        max_epochs: round3(&max_e),
        cap_violated: max_e > cap,
        weights_normalized,
    })
}

/// Tokens left after keeping the top `k` fraction of a pool of uniform documents.
pub fn selected_pool_tokens(pool_tokens: u64, k: f64) -> Option<u64> {
    let k = BigRational::from_float(k)?;
    (k * ratio(pool_tokens)).round().to_integer().to_u64()
}

/// Largest budget whose busiest source stays within `max_epochs`.
pub fn budget_for_max_epochs(sources: &[SourceBudget], max_epochs: f64) -> Result<u64, MixError> {
    let named: Vec<(String, Option<f64>)> =
        sources.iter().map(|s| (s.name.clone(), s.weight)).collect();
    let weights = normalized_weights(&named)?;
    let e = BigRational::from_float(max_epochs).ok_or(MixError::ZeroBudget)?;
    let mut best: Option<BigRational> = None;
    for (s, w) in sources.iter().zip(&weights) {
        if s.unique_tokens == 0 {
            return Err(MixError::EmptySource(s.name.clone()));
        }
        if w.is_zero() {
            continue;
        }
        let t = &e * ratio(s.unique_tokens) / w;
        best = Some(match best {
            Some(b) if b < t => b,
            _ => t,
        });
    }
    let t = best.ok_or(MixError::ZeroWeightAll)?.floor().to_integer();
    t.to_u64().filter(|t| *t > 0).ok_or(MixError::ZeroBudget)
}

#[derive(Debug, Clone)]
pub struct MixSource {
    pub name: String,
    pub manifest: CorpusManifest,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MixPlan {
    pub sources: Vec<MixSource>,
    pub token_budget: u64,
    pub max_repeats: u32,
    pub seed: u64,
    pub share_mode: ShareMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    sources: Vec<PlanFileSource>,
    token_budget: u64,
    #[serde(default = "default_repeats")]
    max_repeats: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    share_mode: ShareMode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFileSource {
    name: Option<String>,
    manifest: PathBuf,
    weight: Option<f64>,
}

fn default_repeats() -> u32 {
    4
}

impl MixPlan {
    /// Load a TOML or JSON plan; manifest paths are relative to the plan file.
    pub fn load(path: &Path) -> Result<Self, MixError> {
        let bad = |reason: String| MixError::InvalidPlan {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let file: PlanFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        let sources = file
            .sources
            .into_iter()
            .map(|s| {
                let manifest = CorpusManifest::load(&base.join(&s.manifest))?;
                Ok(MixSource {
                    name: s.name.unwrap_or_else(|| manifest.corpus_name.clone()),
                    manifest,
                    weight: s.weight,
                })
            })
            .collect::<Result<Vec<_>, MixError>>()?;
        Ok(MixPlan {
            sources,
            token_budget: file.token_budget,
            max_repeats: file.max_repeats,
            seed: file.seed,
            share_mode: file.share_mode,
        })
    }

    pub fn budgets(&self) -> Vec<SourceBudget> {
        self.sources
            .iter()
            .map(|s| SourceBudget {
                name: s.name.clone(),
                unique_tokens: s.manifest.total_tokens,
                weight: s.weight,
            })
            .collect()
    }
}

pub fn plan(mix: &MixPlan) -> Result<BudgetReport, MixError> {
    if let Some(s) = mix.sources.iter().find(|s| s.manifest.document_count == 0) {
        return Err(MixError::EmptySource(s.name.clone()));
    }
    plan_budget(&mix.budgets(), mix.token_budget, mix.max_repeats)
}

/// Replication count per document of one source.
///
/// Every document gets `floor(target / size)` copies; documents taken in a
/// seeded random order get one more copy until the remainder is covered,
/// stopping at whichever side of the remainder is closer.
pub fn replication_counts(sizes: &[u64], target: u64, seed: u64) -> Vec<u64> {
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let full = target / total;
    let remainder = target - full * total;
    let mut counts = vec![full; sizes.len()];
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    shuffle(&mut order, &mut rng(seed));
    let mut acc = 0u64;
    let mut taken = 0;
    while acc < remainder && taken < order.len() {
        acc += sizes[order[taken]];
        taken += 1;
    }
    if taken > 0 && acc > remainder {
        let without = acc - sizes[order[taken - 1]];
        if remainder - without < acc - remainder {
            taken -= 1;
        }
    }
    for &j in &order[..taken] {
        counts[j] += 1;
    }
    counts
}

/// Same, measured in documents: `target_docs` copies spread as evenly as
/// possible over the documents.
fn replication_counts_docs(n: usize, target_docs: u64, seed: u64) -> Vec<u64> {
    replication_counts(&vec![1; n], target_docs, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct MixOutput {
    pub manifest: CorpusManifest,
    pub report: BudgetReport,
    /// Realized tokens per source.
    pub realized_tokens: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default)]
pub struct MaterializeOptions {
    /// Proceed even if the plan repeats a source more than `max_repeats` times.
    pub allow_cap_violation: bool,
    pub corpus_name: Option<String>,
    pub write: WriteOptions,
}

/// Build the mixed corpus: replicate each source to its share of the budget,
/// then shuffle all copies globally with the plan seed.
pub fn materialize(
    mix: &MixPlan,
    out_dir: &Path,
    opts: &MaterializeOptions,
) -> Result<MixOutput, MixError> {
    let report = plan(mix)?;
    if report.cap_violated {
        if !opts.allow_cap_violation {
            return Err(MixError::CapViolated {
                max_epochs: report.max_epochs,
                max_repeats: mix.max_repeats,
            });
        }
        log::warn!(
            "materializing a mix that repeats data {:.3} times (cap {}) because the override is set",
            report.max_epochs,
            mix.max_repeats
        );
    }
    let named: Vec<(String, Option<f64>)> =
        mix.sources.iter().map(|s| (s.name.clone(), s.weight)).collect();
    let weights = normalized_weights(&named)?;
    let t = ratio(mix.token_budget);

    let docs: Vec<Vec<Document>> = mix
        .sources
        .iter()
        .map(|s| read_documents(&s.manifest))
        .collect::<Result<_, _>>()?;

    // documents mode: pick a total document count whose expected tokens hit T
    let docs_total = if mix.share_mode == ShareMode::Documents {
        let mean_len: BigRational = weights
            .iter()
            .zip(&docs)
            .map(|(w, d)| {
                let tokens: u64 = d.iter().map(|x| x.token_count).sum();
                w * ratio(tokens) / ratio(d.len() as u64)
            })
            .sum();
        Some((&t / mean_len).round())
    } else {
        None
    };

    let mut schedule: Vec<(usize, usize)> = Vec::new();
    let mut realized_tokens = BTreeMap::new();
    for (i, (src, w)) in mix.sources.iter().zip(&weights).enumerate() {
        let source_seed = mix.seed ^ hash64(src.name.as_bytes()) ^ i as u64;
        let counts = match &docs_total {
            None => {
                let target = (w * &t).round().to_integer().to_u64().unwrap_or(0);
                let sizes: Vec<u64> = docs[i].iter().map(|d| d.token_count).collect();
                replication_counts(&sizes, target, source_seed)
            }
            Some(n) => {
                let target = (w * n).round().to_integer().to_u64().unwrap_or(0);
                replication_counts_docs(docs[i].len(), target, source_seed)
            }
        };
        let mut realized = 0u64;
        for (j, c) in counts.iter().enumerate() {
            realized += c * docs[i][j].token_count;
            schedule.extend(std::iter::repeat_n((i, j), *c as usize));
        }
        realized_tokens.insert(src.name.clone(), realized);
    }
    shuffle(&mut schedule, &mut rng(mix.seed));

    let out_docs: Vec<Document> = schedule
        .into_iter()
        .map(|(i, j)| {
            let mut d = docs[i][j].clone();
            d.metadata.insert("mix_source".into(), mix.sources[i].name.clone());
            d
        })
        .collect();
    let tokenizer_id = mix
        .sources
        .first()
        .map(|s| s.manifest.tokenizer_id.clone())
        .unwrap_or_default();
    let mut wopts = opts.write.clone();
    wopts.source_tokens = Some(realized_tokens.clone());
    let name = opts.corpus_name.clone().unwrap_or_else(|| "mix".into());
    let manifest = write_corpus(out_dir, &name, &tokenizer_id, &out_docs, &wopts)?;
    Ok(MixOutput {
        manifest,
        report,
        realized_tokens,
    })
}

/// `|a ∩ b| / |a|`, or `|a ∩ b| / |a ∪ b|` when `symmetric`.
pub fn overlap_fraction(
    a: &HashSet<String>,
    b: &HashSet<String>,
    symmetric: bool,
) -> Result<f64, MixError> {
    if a.is_empty() {
        return Err(MixError::EmptyReference);
    }
    let inter = a.intersection(b).count();
    let denom = if symmetric { a.union(b).count() } else { a.len() };
    Ok(inter as f64 / denom as f64)
}
