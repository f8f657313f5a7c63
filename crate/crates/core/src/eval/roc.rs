use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score
    /// threshold in decreasing order.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Threshold sweep over distinct scores; AUC by the trapezoid rule, which
/// equals the Mann–Whitney statistic with ties counted as one half.
pub fn roc(scored: &[(f64, bool)]) -> Result<RocCurve> {
    let positives = scored.iter().filter(|s| s.1).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass { positives, negatives });
    }
    if let Some(s) = scored.iter().find(|s| !s.0.is_finite()) {
        return Err(invalid(format!("non-finite score {}", s.0)));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the area in units of one (positive, negative) pair, kept integral.
    let mut area2 = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
        points.push((fp as f64 / n, tp as f64 / p));
    }
    Ok(RocCurve { points, auc: area2 as f64 / (2.0 * p * n) })
}

impl RocCurve {
    /// TPR at `fpr` by linear interpolation; the upper value on vertical steps.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x0 <= fpr && fpr <= x1 {
                let y = if x1 == x0 { y1 } else { y0 + (y1 - y0) * (fpr - x0) / (x1 - x0) };
                best = best.max(y);
            }
        }
        best
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_points(path, &self.points)
    }
}

pub fn write_points(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fpr", "tpr"])?;
    for (x, y) in points {
        w.write_record([format!("{x}"), format!("{y}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Vertical average of several curves on the FPR grid `0, 0.01, …, 1`.
pub fn average_roc(curves: &[RocCurve]) -> Result<Vec<(f64, f64)>> {
    if curves.is_empty() {
        return Err(invalid("no curves to average"));
    }
    Ok((0..=100)
        .map(|i| {
            let x = i as f64 / 100.0;
            let y = curves.iter().map(|c| c.tpr_at(x)).sum::<f64>() / curves.len() as f64;
            (x, y)
        })
        .collect())
}
