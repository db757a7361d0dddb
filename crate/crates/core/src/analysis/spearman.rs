use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::AnalysisError;
use crate::classifier::ScoredDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub doc_id: String,
    pub raw_score: f64,
    pub rewritten_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub n: usize,
    pub rho: f64,
    pub p_value: f64,
}

/// Pair raw and rewritten scores by document id, ordered by id.
pub fn pair_scores(raw: &[ScoredDocument], rewritten: &[ScoredDocument]) -> Vec<PairedScores> {
    let rw: HashMap<&str, f64> = rewritten.iter().map(|s| (s.doc_id.as_str(), s.score)).collect();
    let mut out: Vec<PairedScores> = raw
        .iter()
        .filter_map(|r| {
            rw.get(r.doc_id.as_str()).map(|&y| PairedScores {
                doc_id: r.doc_id.clone(),
                raw_score: r.score,
                rewritten_score: y,
            })
        })
        .collect();
    out.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    out.dedup_by(|a, b| a.doc_id == b.doc_id);
    out
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        // positions i+1 ..= j share their average
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Two-sided p-value of a correlation `rho` over `n` pairs using the
/// Student-t approximation with `n − 2` degrees of freedom.
pub fn t_test_p_value(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let r2 = rho * rho;
    if r2 >= 1.0 {
        return 0.0;
    }
    // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2) with t² = rho²·df/(1−rho²)
    let x = (1.0 - r2).max(0.0);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Spearman rank correlation (Pearson correlation of midranks) and its
/// t-approximation p-value.
pub fn spearman(pairs: &[PairedScores]) -> Result<SpearmanResult, AnalysisError> {
    let n = pairs.len();
    if n < 3 {
        return Err(AnalysisError::TooFewSamples { need: 3, got: n });
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.raw_score).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.rewritten_score).collect();
    let rx = midranks(&xs);
    let ry = midranks(&ys);
    let mean = (n as f64 + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateVariance("raw_score"));
    }
    if syy == 0.0 {
        return Err(AnalysisError::DegenerateVariance("rewritten_score"));
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    Ok(SpearmanResult {
        n,
        rho,
        p_value: t_test_p_value(rho, n),
    })
}
