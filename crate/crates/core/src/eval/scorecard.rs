use serde::{Deserialize, Serialize};

use super::matching::{average_precision_11pt, class_counts_at_operating_point, log_average_miss_rate, match_detections, MatchResult};
use super::EvalError;
use crate::dataset::AnnotationRecord;
use crate::detection::Detection;
use crate::taxonomy::CellClass;

pub const TABLE_HEADER: &str = "Object class,Precision,Recall,F1 score,Log-average miss rate,AP@0.5";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: CellClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lamr: f64,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScorecard {
    pub classes: Vec<ClassScore>,
    pub map: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_lamr: f64,
}

fn mean(scores: &[ClassScore], f: impl Fn(&ClassScore) -> f64) -> f64 {
    scores.iter().map(f).sum::<f64>() / scores.len() as f64
}

/// Unweighted means over the given class rows.
pub fn map_and_f1(scores: &[ClassScore]) -> Result<DetectionScorecard, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(DetectionScorecard {
        classes: scores.to_vec(),
        map: mean(scores, |s| s.ap),
        mean_precision: mean(scores, |s| s.precision),
        mean_recall: mean(scores, |s| s.recall),
        mean_f1: mean(scores, |s| s.f1),
        mean_lamr: mean(scores, |s| s.lamr),
    })
}

/// Precision with no predictions counts as 0 so that every row is a number.
pub fn evaluate_class(m: &MatchResult, cls: CellClass) -> Result<ClassScore, EvalError> {
    let (tp, fp, fn_) = class_counts_at_operating_point(m, cls, f64::NEG_INFINITY);
    if tp + fn_ == 0 {
        return Err(EvalError::NoGroundTruth(cls));
    }
    let frac = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Ok(ClassScore {
        class: cls,
        precision: frac(tp, tp + fp),
        recall: frac(tp, tp + fn_),
        // 2PR/(P+R) in integer form
        f1: frac(2 * tp, 2 * tp + fp + fn_),
        lamr: log_average_miss_rate(m, cls, m.images.max(1))?,
        ap: average_precision_11pt(m, cls)?,
    })
}

/// Matches once, then scores every evaluated class that has ground truth.
pub fn evaluate_detections(preds: &[Detection], gts: &[AnnotationRecord], iou_threshold: f64) -> Result<DetectionScorecard, EvalError> {
    let m = match_detections(preds, gts, iou_threshold);
    let scores = CellClass::EVALUATED
        .iter()
        .filter(|&&c| m.gt_count(c) > 0)
        .map(|&c| evaluate_class(&m, c))
        .collect::<Result<Vec<_>, _>>()?;
    map_and_f1(&scores)
}

/// "megakaryocyte_nucleus" → "Megakaryocyte nucleus".
fn row_label(c: CellClass) -> String {
    let name = c.name().replace('_', " ");
    let mut chars = name.chars();
    match chars.next() {
        Some(first) => first.to_ascii_uppercase().to_string() + chars.as_str(),
        None => name,
    }
}

impl DetectionScorecard {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{TABLE_HEADER}\n");
        for c in &self.classes {
            s.push_str(&format!("{},{},{},{},{},{}\n", row_label(c.class), c.precision, c.recall, c.f1, c.lamr, c.ap));
        }
        s.push_str(&format!(
            "Average,{},{},{},{},{}\n",
            self.mean_precision, self.mean_recall, self.mean_f1, self.mean_lamr, self.map
        ));
        s
    }

    /// Reads per-class rows and recomputes the averages; an `Average` row,
    /// if present, is ignored.
    pub fn from_csv(text: &str) -> Result<DetectionScorecard, EvalError> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or(EvalError::EmptyInput)?;
        if header.split(',').count() != 6 {
            return Err(EvalError::Malformed(format!("header `{header}`")));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 6 {
                return Err(EvalError::Malformed(format!("row {}: expected 6 fields", n + 1)));
            }
            if fields[0].eq_ignore_ascii_case("average") {
                continue;
            }
            let class: CellClass = fields[0].parse().map_err(|e| EvalError::Malformed(format!("row {}: {e}", n + 1)))?;
            let mut v = [0.0; 5];
            for (slot, f) in v.iter_mut().zip(&fields[1..]) {
                *slot = f.parse().map_err(|_| EvalError::Malformed(format!("row {}: bad number `{f}`", n + 1)))?;
                if !(0.0..=1.0).contains(slot) {
                    return Err(EvalError::Malformed(format!("row {}: {f} outside [0, 1]", n + 1)));
                }
            }
            rows.push(ClassScore { class, precision: v[0], recall: v[1], f1: v[2], lamr: v[3], ap: v[4] });
        }
        map_and_f1(&rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scorecard serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::matching::tests::{det, gt};
    use crate::geometry::BBox;

    fn row(class: CellClass, ap: f64) -> ClassScore {
        ClassScore { class, precision: 0.5, recall: 0.25, f1: 1.0 / 3.0, lamr: 0.4, ap }
    }

    #[test]
    fn singleton_and_permutation() {
        let one = map_and_f1(&[row(CellClass::Blast, 0.7)]).unwrap();
        assert_eq!(one.map, 0.7);
        let a = map_and_f1(&[row(CellClass::Blast, 0.25), row(CellClass::Debris, 0.5), row(CellClass::Platelet, 1.0)]).unwrap();
        let b = map_and_f1(&[row(CellClass::Platelet, 1.0), row(CellClass::Blast, 0.25), row(CellClass::Debris, 0.5)]).unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(a.map, 1.75 / 3.0);
        assert_eq!(map_and_f1(&[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn csv_round_trip() {
        let card = map_and_f1(&[row(CellClass::MegakaryocyteNucleus, 0.6), row(CellClass::PlasmaCell, 0.72)]).unwrap();
        let csv = card.to_csv();
        assert!(csv.starts_with(&format!("{TABLE_HEADER}\nMegakaryocyte nucleus,0.5,")));
        assert!(csv.contains("\nAverage,"));
        assert_eq!(DetectionScorecard::from_csv(&csv).unwrap(), card);
        assert!(matches!(DetectionScorecard::from_csv("h,a,b,c,d,e\nBlast,x,1,1,1,1"), Err(EvalError::Malformed(_))));
        assert!(matches!(DetectionScorecard::from_csv("h,a,b,c,d,e\nGoblin,1,1,1,1,1"), Err(EvalError::Malformed(_))));
    }

    #[test]
    fn end_to_end_small() {
        let b = BBox::new(0.3, 0.3, 0.1, 0.1);
        let far = BBox::new(0.8, 0.8, 0.1, 0.1);
        let g = [gt(0, &[(CellClass::Blast, b), (CellClass::Blast, far)]), gt(1, &[(CellClass::Debris, b)])];
        let p = [det(0, CellClass::Blast, 0.9, b), det(1, CellClass::Debris, 0.8, b), det(1, CellClass::Debris, 0.3, far)];
        let card = evaluate_detections(&p, &g, 0.5).unwrap();
        assert_eq!(card.classes.len(), 2);
        let blast = &card.classes[0];
        assert_eq!((blast.precision, blast.recall, blast.f1), (1.0, 0.5, 2.0 / 3.0));
        assert_eq!(blast.ap, 6.0 / 11.0);
        let debris = &card.classes[1];
        assert_eq!((debris.precision, debris.recall, debris.ap), (0.5, 1.0, 1.0));
        assert!(evaluate_detections(&p, &[], 0.5).is_err());
    }
}
