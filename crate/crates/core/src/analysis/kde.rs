use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Fixed(f64),
    /// Silverman's rule of thumb.
    Auto,
}

/// Kernel contributions beyond this many bandwidths are below 1e-31 and skipped.
const CUTOFF: f64 = 12.0;

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `0.9 · min(σ, IQR/1.34) · n^(-1/5)`, falling back to σ when the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64, AnalysisError> {
    let n = samples.len();
    if n < 2 {
        return Err(AnalysisError::TooFewSamples { need: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(AnalysisError::InvalidBandwidth)
    }
}

fn resolve(samples: &[f64], bw: Bandwidth) -> Result<f64, AnalysisError> {
    match bw {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
        Bandwidth::Fixed(_) => Err(AnalysisError::InvalidBandwidth),
        Bandwidth::Auto => silverman_bandwidth(samples),
    }
}

/// Evenly spaced grid of `points` over `[min − 4h, max + 4h]`.
pub fn kde_grid(samples: &[f64], h: f64, points: usize) -> Vec<f64> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * h;
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

/// Gaussian kernel density estimate at each grid point. Returns the
/// bandwidth used and `(x, density)` pairs.
pub fn kde(
    samples: &[f64],
    bandwidth: Bandwidth,
    grid: &[f64],
) -> Result<(f64, Vec<(f64, f64)>), AnalysisError> {
    if samples.len() < 2 {
        return Err(AnalysisError::TooFewSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let h = resolve(samples, bandwidth)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let out = grid
        .iter()
        .map(|&x| {
            let lo = sorted.partition_point(|&s| s < x - CUTOFF * h);
            let hi = sorted.partition_point(|&s| s <= x + CUTOFF * h);
            let sum: f64 = sorted[lo..hi]
                .iter()
                .map(|s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            (x, sum * norm)
        })
        .collect();
    Ok((h, out))
}
