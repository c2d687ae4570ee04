use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PercentileRow {
    pub percentile: f64,
    pub value: f64,
}

/// Nearest-rank percentiles: the value at rank `max(1, ⌈p/100 · n⌉)` of the
/// ascending scores.
pub fn percentile_report(scores: &[f64], percentiles: &[f64]) -> Result<Vec<PercentileRow>> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no scores to summarize".into()));
    }
    if let Some(bad) = percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("percentile {bad} outside [0, 100]")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(percentiles
        .iter()
        .map(|&p| {
            let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
            PercentileRow {
                percentile: p,
                value: sorted[rank - 1],
            }
        })
        .collect())
}
