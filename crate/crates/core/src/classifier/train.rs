use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::feature_buckets;
use super::{ClassifierError, ClassifierModel, NEGATIVE, POSITIVE};
use crate::corpus::Document;
use crate::util::{rng, sha256_hex, shuffle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub bucket_count: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub epochs: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bucket_count: 1 << 21,
            embedding_dim: 16,
            learning_rate: 0.1,
            epochs: 5,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidHyper(m.into()));
        if self.bucket_count == 0 || self.bucket_count > u32::MAX as usize {
            return bad("bucket_count must be in [1, 2^32)");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        Ok(())
    }
}

pub struct TrainSet {
    pub positives: Vec<Document>,
    pub negatives: Vec<Document>,
    pub seed: u64,
}

/// Draw `total` positives from several sources in the given proportions,
/// sampling without replacement. A source smaller than its share contributes
/// all of its documents.
pub fn compose_positives(
    sources: Vec<Vec<Document>>,
    proportions: &[f64],
    total: usize,
    seed: u64,
) -> Vec<Document> {
    let sum: f64 = proportions.iter().sum();
    let mut r = rng(seed);
    let mut out = Vec::new();
    for (mut docs, p) in sources.into_iter().zip(proportions) {
        let want = ((p / sum) * total as f64).round() as usize;
        shuffle(&mut docs, &mut r);
        docs.truncate(want);
        out.extend(docs);
    }
    out
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    hyper: &'a TrainConfig,
    seed: u64,
    positives: usize,
    negatives: usize,
    data: String,
}

fn data_fingerprint(ts: &TrainSet) -> String {
    let mut h = sha2::Sha256::default();
    use sha2::Digest;
    for (tag, docs) in [(b'+', &ts.positives), (b'-', &ts.negatives)] {
        for d in docs {
            h.update([tag]);
            h.update(d.id.as_bytes());
            h.update([0]);
            h.update(d.text.as_bytes());
            h.update([0]);
        }
    }
    hex::encode(h.finalize())
}

/// Single-threaded SGD on the 2-class softmax loss with a linearly decaying
/// learning rate. The result depends only on (seed, hyperparameters, input
/// order).
pub fn train(ts: &TrainSet, hyper: &TrainConfig) -> Result<ClassifierModel, ClassifierError> {
    hyper.validate()?;
    if ts.positives.is_empty() {
        return Err(ClassifierError::EmptyClass("positive"));
    }
    if ts.negatives.is_empty() {
        return Err(ClassifierError::EmptyClass("negative"));
    }
    let pos_ids: HashSet<&str> = ts.positives.iter().map(|d| d.id.as_str()).collect();
    if let Some(d) = ts.negatives.iter().find(|d| pos_ids.contains(d.id.as_str())) {
        return Err(ClassifierError::OverlappingClasses(d.id.clone()));
    }

    let b = hyper.bucket_count;
    let dim = hyper.embedding_dim;
    let examples: Vec<(Vec<u32>, usize)> = ts
        .positives
        .iter()
        .map(|d| (feature_buckets(&d.text, b), POSITIVE))
        .chain(
            ts.negatives
                .iter()
                .map(|d| (feature_buckets(&d.text, b), NEGATIVE)),
        )
        .collect();

    let mut r = rng(ts.seed);
    let bound = 1.0 / dim as f32;
    let mut input: Vec<f32> = (0..b * dim).map(|_| r.random_range(-bound..bound)).collect();
    let mut output = vec![0f32; 2 * dim];

    let total_steps = hyper.epochs as u64 * examples.len() as u64;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut hidden = vec![0f32; dim];
    let mut grad = vec![0f32; dim];
    let mut step: u64 = 0;
    for _ in 0..hyper.epochs {
        shuffle(&mut order, &mut r);
        for &i in &order {
            let lr = (hyper.learning_rate * (1.0 - step as f64 / total_steps as f64)) as f32;
            step += 1;
            let (feats, label) = &examples[i];
            if feats.is_empty() {
                continue;
            }
            hidden.iter_mut().for_each(|v| *v = 0.0);
            for &f in feats {
                let row = &input[f as usize * dim..(f as usize + 1) * dim];
                hidden.iter_mut().zip(row).for_each(|(h, v)| *h += v);
            }
            let inv = 1.0 / feats.len() as f32;
            hidden.iter_mut().for_each(|h| *h *= inv);

            let logits: [f32; 2] = [0, 1].map(|c| {
                output[c * dim..(c + 1) * dim]
                    .iter()
                    .zip(&hidden)
                    .map(|(w, h)| w * h)
                    .sum()
            });
            let m = logits[0].max(logits[1]);
            let e = logits.map(|l| (l - m).exp());
            let z = e[0] + e[1];
            grad.iter_mut().for_each(|g| *g = 0.0);
            for c in 0..2 {
                let target = if c == *label { 1.0 } else { 0.0 };
                let alpha = lr * (target - e[c] / z);
                let row = &mut output[c * dim..(c + 1) * dim];
                for ((g, w), h) in grad.iter_mut().zip(row.iter_mut()).zip(&hidden) {
                    *g += alpha * *w;
                    *w += alpha * h;
                }
            }
            grad.iter_mut().for_each(|g| *g *= inv);
            if !grad.iter().chain(&output).all(|v| v.is_finite()) {
                return Err(ClassifierError::DivergedTraining { step });
            }
            for &f in feats {
                let row = &mut input[f as usize * dim..(f as usize + 1) * dim];
                row.iter_mut().zip(&grad).for_each(|(v, g)| *v += g);
            }
        }
    }
    if !input.iter().all(|v| v.is_finite()) {
        return Err(ClassifierError::DivergedTraining { step });
    }

    let fp = Fingerprint {
        hyper,
        seed: ts.seed,
        positives: ts.positives.len(),
        negatives: ts.negatives.len(),
        data: data_fingerprint(ts),
    };
    let hash = sha256_hex(&serde_json::to_vec(&fp).expect("fingerprint serializes"));
    Ok(ClassifierModel {
        bucket_count: b,
        embedding_dim: dim,
        input,
        output,
        label_names: ["negative".into(), "positive".into()],
        train_config_hash: hash,
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    hyperparameters: &'a TrainConfig,
    seed: u64,
    positives: usize,
    negatives: usize,
    train_config_hash: &'a str,
    tool_version: &'a str,
}

/// Write the JSON sidecar describing how a model was trained.
pub(crate) fn write_sidecar(
    path: &Path,
    model: &ClassifierModel,
    ts: &TrainSet,
    hyper: &TrainConfig,
) -> Result<(), ClassifierError> {
    let s = Sidecar {
        hyperparameters: hyper,
        seed: ts.seed,
        positives: ts.positives.len(),
        negatives: ts.negatives.len(),
        train_config_hash: &model.train_config_hash,
        tool_version: crate::TOOL_VERSION,
    };
    crate::util::write_json_atomic(path, &s).map_err(|e| ClassifierError::io(path, e))
}

impl ClassifierModel {
    /// Save the model and its `<path>.json` hyperparameter sidecar.
    pub fn save_with_sidecar(
        &self,
        path: &Path,
        ts: &TrainSet,
        hyper: &TrainConfig,
    ) -> Result<(), ClassifierError> {
        self.save(path)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        write_sidecar(Path::new(&side), self, ts, hyper)
    }
}
