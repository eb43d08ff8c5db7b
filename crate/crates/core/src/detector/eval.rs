//! Pixel-level precision/recall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, Image};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// Descending score thresholds, one per distinct score.
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub average_precision: f64,
}

impl PrCurve {
    /// At most `n` points spread evenly along the sweep, for reporting.
    pub fn thinned(&self, n: usize) -> PrCurve {
        let len = self.thresholds.len();
        if len <= n || n < 2 {
            return self.clone();
        }
        let idx: Vec<usize> = (0..n).map(|i| i * (len - 1) / (n - 1)).collect();
        PrCurve {
            thresholds: idx.iter().map(|&i| self.thresholds[i]).collect(),
            precision: idx.iter().map(|&i| self.precision[i]).collect(),
            recall: idx.iter().map(|&i| self.recall[i]).collect(),
            average_precision: self.average_precision,
        }
    }
}

/// Sweeps every distinct score from high to low, predicting "light" for
/// pixels scoring at or above it. AP is the trapezoidal area under the
/// curve after dropping zero-recall points and anchoring at recall 0 with
/// the first remaining precision.
pub fn eval_pr(scores: &[Image], gt: &[BinaryMask]) -> Result<PrCurve> {
    if scores.len() != gt.len() {
        return Err(Error::dims("score and ground-truth lists differ in length"));
    }
    let mut pairs: Vec<(f64, bool)> = Vec::new();
    for (s, g) in scores.iter().zip(gt) {
        if s.dims() != g.dims() || s.channels() != 1 {
            return Err(Error::dims("score map does not match its ground truth"));
        }
        pairs.extend(s.data().iter().copied().zip(g.data().iter().copied()));
    }
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 {
        return Err(Error::domain("ground truth has no positive pixels"));
    }
    if pairs.iter().any(|p| p.0.is_nan()) {
        return Err(Error::domain("scores contain NaN"));
    }
    pairs.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
    let mut thresholds = Vec::new();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        precision.push(tp as f64 / (tp + fp) as f64);
        recall.push(tp as f64 / positives as f64);
    }
    let pts: Vec<(f64, f64)> = recall
        .iter()
        .zip(&precision)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, p)| (*r, *p))
        .collect();
    let mut ap = 0.0;
    let mut prev = (0.0, pts[0].1);
    for &(r, p) in &pts {
        ap += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    Ok(PrCurve {
        thresholds,
        precision,
        recall,
        average_precision: ap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrReport {
    pub detector: PrCurve,
    /// Ranking pixels by LDR intensity alone.
    pub intensity_baseline: PrCurve,
}

/// Detector curve plus the intensity-only baseline on the same pixels.
pub fn eval_pr_report(scores: &[Image], intensities: &[Image], gt: &[BinaryMask]) -> Result<PrReport> {
    Ok(PrReport {
        detector: eval_pr(scores, gt)?,
        intensity_baseline: eval_pr(intensities, gt)?,
    })
}
