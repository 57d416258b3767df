use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::matching::{best_gt, flatten_gts, rank_order};
use super::EvalError;
use crate::dataset::{AnnotationRecord, TileRef};
use crate::detection::Detection;
use crate::geometry::BBox;
use crate::taxonomy::CellClass;

/// Rows are ground-truth classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<CellClass>,
    pub counts: Vec<Vec<u64>>,
    pub gt_totals: Vec<u64>,
    /// `counts` divided by the row's ground-truth total (all zero for an empty row).
    pub rates: Vec<Vec<f64>>,
    /// Per row, the fraction left unmatched or matched to a class outside
    /// `classes`.
    pub residual: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ground_truth");
        for c in &self.classes {
            s.push(',');
            s.push_str(c.name());
        }
        s.push_str(",miss\n");
        for (i, c) in self.classes.iter().enumerate() {
            s.push_str(c.name());
            for r in &self.rates[i] {
                s.push_str(&format!(",{r}"));
            }
            s.push_str(&format!(",{}\n", self.residual[i]));
        }
        s
    }
}

/// Matches by location alone (any class pairs with any class) so that
/// misclassifications land off the diagonal instead of becoming misses.
pub fn confusion_matrix(
    preds: &[Detection],
    gts: &[AnnotationRecord],
    iou_threshold: f64,
    classes: &[CellClass],
) -> Result<ConfusionMatrix, EvalError> {
    let col: BTreeMap<CellClass, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let flat = flatten_gts(gts);
    let boxes: Vec<BBox> = flat.iter().map(|g| g.bbox).collect();
    let mut by_tile: BTreeMap<&TileRef, Vec<usize>> = BTreeMap::new();
    for (i, g) in flat.iter().enumerate() {
        by_tile.entry(&g.tile).or_default().push(i);
    }

    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut gt_totals = vec![0u64; k];
    for g in &flat {
        if let Some(&r) = col.get(&g.cls) {
            gt_totals[r] += 1;
        }
    }
    if gt_totals.iter().all(|&n| n == 0) {
        return Err(EvalError::EmptyInput);
    }

    let mut taken = vec![false; boxes.len()];
    for idx in rank_order(preds) {
        let p = &preds[idx];
        let Some(cands) = by_tile.get(&p.tile) else { continue };
        if let Some(g) = best_gt(&p.bbox, cands, &boxes, &taken, iou_threshold) {
            taken[g] = true;
            if let (Some(&r), Some(&c)) = (col.get(&flat[g].cls), col.get(&p.cls)) {
                counts[r][c] += 1;
            }
        }
    }

    let rates: Vec<Vec<f64>> = counts
        .iter()
        .zip(&gt_totals)
        .map(|(row, &n)| row.iter().map(|&x| if n == 0 { 0.0 } else { x as f64 / n as f64 }).collect())
        .collect();
    let residual = counts
        .iter()
        .zip(&gt_totals)
        .map(|(row, &n)| if n == 0 { 0.0 } else { (n - row.iter().sum::<u64>()) as f64 / n as f64 })
        .collect();
    Ok(ConfusionMatrix { classes: classes.to_vec(), counts, gt_totals, rates, residual })
}
