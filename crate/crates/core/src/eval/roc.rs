//! ROC curves, trapezoidal AUC and the equal-error-rate threshold.

use crate::error::{Error, Result};

/// One operating point: everything scoring at or above `threshold` is
/// called positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Operating points sorted by threshold descending, from (+inf, 0, 0) to
/// (-inf, 1, 1), one interior point per distinct score (ties grouped).
#[derive(Clone, Debug)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Builds the ROC curve of scores against binary labels.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Validation(
            "roc needs both classes present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // absorb the whole tie group
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        fpr: 1.0,
        tpr: 1.0,
    });
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve; equal to the probability that a
/// random positive outscores a random negative, with half credit for ties.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum()
}

/// The threshold at which false-positive and false-negative rates meet.
///
/// Every curve point is a candidate; ties in |FPR - FNR| break toward the
/// higher sensitivity. When the sign of FPR - FNR flips between the best
/// point and a finite neighbour, the returned threshold is the linear
/// interpolation of the crossing, kept inside the interval where it still
/// classifies like the best point; otherwise the gap between the best
/// point and the next lower threshold is split in half.
pub fn eer_threshold(curve: &RocCurve) -> f64 {
    let balance = |p: &RocPoint| p.fpr - (1.0 - p.tpr); // FPR - FNR
    let mut best = 0;
    for (i, p) in curve.points.iter().enumerate().skip(1) {
        let gap_best = balance(&curve.points[best]).abs();
        let gap = balance(p).abs();
        if gap < gap_best - 1e-12
            || ((gap - gap_best).abs() <= 1e-12 && p.tpr > curve.points[best].tpr)
        {
            best = i;
        }
    }
    let best_point = curve.points[best];

    if best_point.threshold.is_finite() {
        // interpolate across a strict sign change with a finite neighbour
        for neighbor in [best.wrapping_sub(1), best + 1] {
            let Some(np) = curve.points.get(neighbor) else {
                continue;
            };
            if !np.threshold.is_finite() || balance(np) * balance(&best_point) >= 0.0 {
                continue;
            }
            let (b0, b1) = (balance(&best_point), balance(np));
            let (t0, t1) = (best_point.threshold, np.threshold);
            let t = t0 + (t1 - t0) * (0.0 - b0) / (b1 - b0);
            // any threshold in (lower, upper] classifies like the upper
            // point, so accept the interpolation only when the best point
            // is that upper end and t stays inside
            let hi = t0.max(t1);
            let lo = t0.min(t1);
            if hi == t0 && t > lo && t <= hi {
                return t;
            }
        }
        // split toward the next lower finite threshold; the midpoint still
        // classifies exactly like the best point
        if let Some(np) = curve.points.get(best + 1) {
            if np.threshold.is_finite() {
                return 0.5 * (best_point.threshold + np.threshold);
            }
        }
        return best_point.threshold;
    }

    // sentinel endpoints: step just past the extreme finite score
    let finite: Vec<f64> = curve
        .points
        .iter()
        .map(|p| p.threshold)
        .filter(|t| t.is_finite())
        .collect();
    if best_point.threshold == f64::INFINITY {
        finite.first().map_or(1.0, |&t| t + 1.0)
    } else {
        finite.last().map_or(0.0, |&t| t - 1.0)
    }
}

/// Specificity, sensitivity and accuracy of thresholding `scores` at
/// `threshold` (score >= threshold is called positive).
pub fn confusion_rates(scores: &[f64], labels: &[bool], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let spec = if tn + fp > 0 {
        tn as f64 / (tn + fp) as f64
    } else {
        0.0
    };
    let sens = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let acc = (tp + tn) as f64 / scores.len() as f64;
    (spec, sens, acc)
}
