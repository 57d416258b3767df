use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::roi::RoiDecision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryConfusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        BinaryConfusion { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Tally gate decisions against ground-truth labels (true = suitable).
    pub fn from_decisions(decisions: &[RoiDecision], labels: &[bool]) -> Result<Self, EvalError> {
        if decisions.len() != labels.len() {
            return Err(EvalError::DimensionMismatch(format!("{} decisions, {} labels", decisions.len(), labels.len())));
        }
        let mut c = BinaryConfusion::default();
        for (d, &truth) in decisions.iter().zip(labels) {
            match (d.accepted, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }
}

/// `None` marks a ratio whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn binary_metrics(c: &BinaryConfusion) -> Result<BinaryMetrics, EvalError> {
    if c.total() == 0 {
        return Err(EvalError::EmptyConfusion);
    }
    Ok(BinaryMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        precision: ratio(c.tp, c.tp + c.fp),
        recall: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one step per distinct score.
    pub points: Vec<(f64, f64)>,
    /// Score threshold reached at each point after the origin.
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// ROC over `(score, label)` pairs. Equal scores form one step, so ties
/// contribute half credit, as in the Mann-Whitney statistic.
pub fn roc_auc(scored: &[(f64, bool)]) -> Result<RocCurve, EvalError> {
    let pos = scored.iter().filter(|s| s.1).count() as u64;
    let neg = scored.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClassInput);
    }
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of 1/(pos·neg), kept integral
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(score);
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, thresholds, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRoc {
    pub fpr: Vec<f64>,
    pub mean_tpr: Vec<f64>,
    pub auc: f64,
    pub fold_aucs: Vec<f64>,
}

/// Upper-envelope TPR of a curve at `x` (the step curve is right-continuous
/// at vertical jumps).
fn tpr_at(points: &[(f64, f64)], x: f64) -> f64 {
    let mut best = 0.0f64;
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x1 < x {
            best = best.max(y1);
            continue;
        }
        if x0 > x {
            break;
        }
        let y = if x1 == x0 { y1 } else { y0 + (y1 - y0) * (x - x0) / (x1 - x0) };
        best = best.max(y);
    }
    best
}

/// Vertical averaging: mean TPR of all curves on a fixed FPR grid of
/// `grid_points` (≥ 2) evenly spaced values in `[0, 1]`.
pub fn mean_roc(curves: &[RocCurve], grid_points: usize) -> Result<MeanRoc, EvalError> {
    if curves.is_empty() || grid_points < 2 {
        return Err(EvalError::EmptyInput);
    }
    let fpr: Vec<f64> = (0..grid_points).map(|i| i as f64 / (grid_points - 1) as f64).collect();
    let mean_tpr: Vec<f64> = fpr
        .iter()
        .map(|&x| curves.iter().map(|c| tpr_at(&c.points, x)).sum::<f64>() / curves.len() as f64)
        .collect();
    let auc = fpr.windows(2).zip(mean_tpr.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0).sum();
    Ok(MeanRoc { fpr, mean_tpr, auc, fold_aucs: curves.iter().map(|c| c.auc).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn per_thousand_reconstruction() {
        let m = binary_metrics(&BinaryConfusion::new(78, 9, 891, 22)).unwrap();
        assert_eq!(m.precision, Some(78.0 / 87.0));
        assert!((m.precision.unwrap() - 0.90).abs() < 0.005);
        assert_eq!(m.recall, Some(0.78));
        assert!((m.specificity.unwrap() - 0.99).abs() < 0.005);
        assert_eq!(m.accuracy, 0.969);
    }

    #[test]
    fn undefined_and_degenerate() {
        let m = binary_metrics(&BinaryConfusion::new(0, 0, 10, 5)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        let perfect = binary_metrics(&BinaryConfusion::new(5, 0, 7, 0)).unwrap();
        assert_eq!(
            perfect,
            BinaryMetrics { accuracy: 1.0, precision: Some(1.0), recall: Some(1.0), specificity: Some(1.0), npv: Some(1.0) }
        );
        assert_eq!(binary_metrics(&BinaryConfusion::default()), Err(EvalError::EmptyConfusion));
    }

    #[test]
    fn auc_extremes() {
        let sep = [(0.9, true), (0.8, true), (0.3, false), (0.1, false)];
        assert_eq!(roc_auc(&sep).unwrap().auc, 1.0);
        let rev: Vec<_> = sep.iter().map(|&(s, l)| (s, !l)).collect();
        assert_eq!(roc_auc(&rev).unwrap().auc, 0.0);
        let tied = [(0.5, true), (0.5, false)];
        let c = roc_auc(&tied).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_auc(&[(0.1, true)]), Err(EvalError::SingleClassInput));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<(f64, bool)> = (0..10_000).map(|_| (rng.random(), rng.random())).collect();
        let auc = roc_auc(&data).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.05, "{auc}");
    }

    #[test]
    fn mean_of_identical_curves_is_the_curve() {
        let c = roc_auc(&[(0.9, true), (0.7, false), (0.6, true), (0.2, false)]).unwrap();
        let m = mean_roc(&[c.clone(), c.clone()], 101).unwrap();
        // trapezoids over the grid smear each vertical jump across one grid step
        assert!((m.auc - c.auc).abs() <= 0.01, "{} {}", m.auc, c.auc);
        assert_eq!((m.mean_tpr[0], m.mean_tpr[50], m.mean_tpr[49]), (0.5, 1.0, 0.5));
        assert_eq!(m.mean_tpr[100], 1.0);
        assert_eq!(mean_roc(&[], 10), Err(EvalError::EmptyInput));
    }
}
