use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveKind {
    /// `x` = false-positive rate, `y` = true-positive rate.
    Roc,
    /// `x` = recall, `y` = precision.
    PrecisionRecall,
}

/// A threshold sweep where a larger score means "more outlier-like".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCurve {
    pub kind: CurveKind,
    pub thresholds: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub area: f64,
}

/// ROC and precision-recall curves over every distinct score threshold.
///
/// ROC area uses the trapezoidal rule. PR area sums recall increments times
/// the interpolated precision (the best precision at that recall or beyond).
pub fn roc_pr(scores: &[f64], is_outlier: &[bool]) -> Result<(ScoredCurve, ScoredCurve)> {
    if scores.len() != is_outlier.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} labels",
            scores.len(),
            is_outlier.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let positives = is_outlier.iter().filter(|&&o| o).count();
    let negatives = is_outlier.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidArgument(
            "curves need at least one outlier and one inlier".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut thresholds = Vec::new();
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut recall, mut precision) = (Vec::new(), Vec::new());
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if is_outlier[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        fpr.push(fp as f64 / negatives as f64);
        tpr.push(tp as f64 / positives as f64);
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    let roc_area = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[1] + y[0]) / 2.0)
        .sum();

    let mut interpolated = precision.clone();
    for j in (0..interpolated.len().saturating_sub(1)).rev() {
        interpolated[j] = interpolated[j].max(interpolated[j + 1]);
    }
    let mut pr_area = 0.0;
    let mut previous = 0.0;
    for (r, p) in recall.iter().zip(&interpolated) {
        pr_area += (r - previous) * p;
        previous = *r;
    }

    let mut roc_thresholds = vec![f64::INFINITY];
    roc_thresholds.extend_from_slice(&thresholds);
    Ok((
        ScoredCurve {
            kind: CurveKind::Roc,
            thresholds: roc_thresholds,
            x: fpr,
            y: tpr,
            area: roc_area,
        },
        ScoredCurve {
            kind: CurveKind::PrecisionRecall,
            thresholds,
            x: recall,
            y: precision,
            area: pr_area,
        },
    ))
}
