use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub documents: u64,
    pub min: u64,
    pub max: u64,
    /// Rounded to 2 decimals.
    pub mean: f64,
    /// Lower-middle element for even counts.
    pub median: u64,
}

pub fn length_stats(token_counts: &[u64]) -> Result<LengthStats, AnalysisError> {
    if token_counts.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let n = token_counts.len();
    let mut v = token_counts.to_vec();
    let mid = (n - 1) / 2;
    let (_, median, _) = v.select_nth_unstable(mid);
    let median = *median;
    let sum: u128 = token_counts.iter().map(|&c| c as u128).sum();
    Ok(LengthStats {
        documents: n as u64,
        min: *token_counts.iter().min().unwrap(),
        max: *token_counts.iter().max().unwrap(),
        mean: crate::util::round_to(sum as f64 / n as f64, 2),
        median,
    })
}
