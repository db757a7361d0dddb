use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{ClassifierError, ScoredDocument};

/// `ceil(k·n)`, with `k·n` values within floating-point noise of an integer
/// treated as that integer.
pub fn selection_count(n: usize, k: f64) -> Result<usize, ClassifierError> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(ClassifierError::InvalidFraction(k));
    }
    let x = k * n as f64;
    let r = x.round();
    let c = if (x - r).abs() <= 1e-9 * x.max(1.0) { r } else { x.ceil() };
    Ok((c as usize).clamp(1, n.max(1)))
}

/// Descending score, then ascending id.
fn rank_order(a: &ScoredDocument, b: &ScoredDocument) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Ids of the `ceil(k·N)` highest-scoring documents, best first. Ties are
/// broken by ascending id, so the result does not depend on input order.
pub fn select_top_fraction(
    scored: &[ScoredDocument],
    k: f64,
) -> Result<Vec<String>, ClassifierError> {
    if scored.is_empty() {
        return Err(ClassifierError::EmptyInput);
    }
    let want = selection_count(scored.len(), k)?;
    let mut refs: Vec<&ScoredDocument> = scored.iter().collect();
    if want < refs.len() {
        refs.select_nth_unstable_by(want - 1, |a, b| rank_order(a, b));
        refs.truncate(want);
    }
    refs.sort_unstable_by(|a, b| rank_order(a, b));
    Ok(refs.into_iter().map(|s| s.doc_id.clone()).collect())
}

/// Token-mass variant: take documents in rank order until their tokens reach
/// `k` of the total token count. Documents missing from `token_counts` count
/// as zero tokens.
pub fn select_top_token_fraction(
    scored: &[ScoredDocument],
    token_counts: &HashMap<String, u64>,
    k: f64,
) -> Result<Vec<String>, ClassifierError> {
    if scored.is_empty() {
        return Err(ClassifierError::EmptyInput);
    }
    if !(k > 0.0 && k <= 1.0) {
        return Err(ClassifierError::InvalidFraction(k));
    }
    let tok = |s: &ScoredDocument| token_counts.get(&s.doc_id).copied().unwrap_or(0);
    let total: u64 = scored.iter().map(tok).sum();
    let target = (k * total as f64).ceil() as u64;
    let mut refs: Vec<&ScoredDocument> = scored.iter().collect();
    refs.sort_unstable_by(|a, b| rank_order(a, b));
    let mut acc = 0u64;
    let mut out = Vec::new();
    for s in refs {
        if acc >= target && !out.is_empty() {
            break;
        }
        acc += tok(s);
        out.push(s.doc_id.clone());
    }
    Ok(out)
}

/// Nearest-rank quantile: the smallest score with at least `q·N` scores at or
/// below it (the minimum for `q = 0`).
pub fn score_quantile(scored: &[ScoredDocument], q: f64) -> Result<f64, ClassifierError> {
    if scored.is_empty() {
        return Err(ClassifierError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(ClassifierError::InvalidFraction(q));
    }
    let n = scored.len();
    let rank = selection_count(n, q).unwrap_or(1);
    let mut scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let (_, v, _) = scores.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

pub fn write_scores(path: &Path, scored: &[ScoredDocument]) -> Result<(), ClassifierError> {
    let mut buf = Vec::with_capacity(scored.len() * 64);
    for s in scored {
        serde_json::to_writer(&mut buf, s).expect("score serializes");
        buf.write_all(b"\n").expect("vec write");
    }
    crate::util::write_atomic(path, &buf).map_err(|e| ClassifierError::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredDocument>, ClassifierError> {
    let f = std::fs::File::open(path).map_err(|e| ClassifierError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| ClassifierError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: ScoredDocument =
            serde_json::from_str(&line).map_err(|e| ClassifierError::BadScores {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })?;
        if !(s.score.is_finite() && (0.0..=1.0).contains(&s.score)) {
            return Err(ClassifierError::BadScores {
                path: path.to_path_buf(),
                reason: format!("line {}: score {} outside [0,1]", i + 1, s.score),
            });
        }
        out.push(s);
    }
    Ok(out)
}
