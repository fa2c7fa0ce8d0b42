//! Static regret against a fixed comparator.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// `R_t = sum_{s <= t} (F^s(learner) - F^s(comparator))`.
    pub cumulative: Vec<f64>,
    pub comparator: String,
    /// Least-squares slope of `log R_t` on `log t` over `window`.
    pub slope: Option<f64>,
    pub window: [usize; 2],
}

pub fn compute_regret(
    losses: &[f64],
    comparator: &[f64],
    description: &str,
    window: [usize; 2],
) -> Result<RegretReport, HarnessError> {
    if losses.len() != comparator.len() {
        return Err(HarnessError::Config {
            field: "comparator".into(),
            message: format!("{} comparator values for {} episodes", comparator.len(), losses.len()),
        });
    }
    let mut acc = 0.0;
    let cumulative: Vec<f64> = losses
        .iter()
        .zip(comparator)
        .map(|(l, c)| {
            acc += l - c;
            acc
        })
        .collect();
    let slope = loglog_slope(&cumulative, window);
    Ok(RegretReport {
        cumulative,
        comparator: description.to_string(),
        slope,
        window,
    })
}

/// Slope of `log max(R_t, 1e-12)` against `log t` for `t` in the window
/// (1-based, clipped to the series). `None` with fewer than two points.
pub fn loglog_slope(series: &[f64], window: [usize; 2]) -> Option<f64> {
    let lo = window[0].max(1);
    let hi = window[1].min(series.len());
    if hi <= lo {
        return None;
    }
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .map(|t| ((t as f64).ln(), series[t - 1].max(1e-12).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}
