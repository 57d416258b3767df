use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::exact::{ratio_to_f64, Frac};
use super::EvalError;
use crate::dataset::{AnnotationRecord, TileRef};
use crate::detection::Detection;
use crate::geometry::{iou, BBox};
use crate::taxonomy::CellClass;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
/// Miss rates are clamped to this before taking logs.
pub const LAMR_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredMatch {
    /// Position in the caller's prediction slice.
    pub index: usize,
    pub tile: TileRef,
    pub cls: CellClass,
    pub confidence: f64,
    pub tp: bool,
    /// Index into [`MatchResult::gts`].
    pub gt: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtStatus {
    pub tile: TileRef,
    pub cls: CellClass,
    pub bbox: BBox,
    /// Index into [`MatchResult::preds`].
    pub matched_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// Predictions in rank order.
    pub preds: Vec<PredMatch>,
    pub gts: Vec<GtStatus>,
    pub iou_threshold: f64,
    /// Distinct tiles seen on either side.
    pub images: usize,
}

impl MatchResult {
    pub fn gt_count(&self, cls: CellClass) -> u64 {
        self.gts.iter().filter(|g| g.cls == cls).count() as u64
    }

    fn ranked(&self, cls: CellClass) -> impl Iterator<Item = &PredMatch> {
        self.preds.iter().filter(move |p| p.cls == cls)
    }

    /// Cumulative `(tp, fp)` after each ranked prediction of `cls`, starting at `(0, 0)`.
    fn prefixes(&self, cls: CellClass) -> Vec<(u64, u64)> {
        let mut out = vec![(0, 0)];
        let (mut tp, mut fp) = (0, 0);
        for p in self.ranked(cls) {
            if p.tp {
                tp += 1;
            } else {
                fp += 1;
            }
            out.push((tp, fp));
        }
        out
    }
}

/// Predictions sorted by the detection ranking; ties fall back to input order.
pub(crate) fn rank_order(preds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[a].rank_cmp(&preds[b]).then(a.cmp(&b)));
    order
}

/// Best still-unmatched candidate for `pred` among `candidates`; equal IoU
/// goes to the earlier ground truth.
pub(crate) fn best_gt(
    pred: &BBox,
    candidates: &[usize],
    boxes: &[BBox],
    taken: &[bool],
    threshold: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &g in candidates {
        if taken[g] {
            continue;
        }
        let v = iou(pred, &boxes[g]);
        if v >= threshold && best.is_none_or(|(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    best.map(|(g, _)| g)
}

pub(crate) fn flatten_gts(gts: &[AnnotationRecord]) -> Vec<GtStatus> {
    gts.iter()
        .flat_map(|r| {
            r.boxes.iter().map(|b| GtStatus { tile: r.tile.clone(), cls: b.cls, bbox: b.bbox, matched_by: None })
        })
        .collect()
}

pub(crate) fn image_count(preds: &[Detection], gts: &[AnnotationRecord]) -> usize {
    let tiles: BTreeSet<&TileRef> = gts.iter().map(|r| &r.tile).chain(preds.iter().map(|p| &p.tile)).collect();
    tiles.len()
}

/// Greedy same-class matching within each tile, in rank order.
pub fn match_detections(preds: &[Detection], gts: &[AnnotationRecord], iou_threshold: f64) -> MatchResult {
    let mut gt_status = flatten_gts(gts);
    let boxes: Vec<BBox> = gt_status.iter().map(|g| g.bbox).collect();
    let mut by_key: BTreeMap<(&TileRef, CellClass), Vec<usize>> = BTreeMap::new();
    let flat_keys = gts.iter().flat_map(|r| r.boxes.iter().map(move |b| (&r.tile, b.cls)));
    for (i, key) in flat_keys.enumerate() {
        by_key.entry(key).or_default().push(i);
    }
    let mut taken = vec![false; boxes.len()];
    let mut out = Vec::with_capacity(preds.len());
    for (rank, idx) in rank_order(preds).into_iter().enumerate() {
        let p = &preds[idx];
        let hit = by_key
            .get(&(&p.tile, p.cls))
            .and_then(|cands| best_gt(&p.bbox, cands, &boxes, &taken, iou_threshold));
        if let Some(g) = hit {
            taken[g] = true;
            gt_status[g].matched_by = Some(rank);
        }
        out.push(PredMatch { index: idx, tile: p.tile.clone(), cls: p.cls, confidence: p.confidence, tp: hit.is_some(), gt: hit });
    }
    MatchResult { preds: out, gts: gt_status, iou_threshold, images: image_count(preds, gts) }
}

/// `(recall, precision)` after each ranked prediction of `cls`.
pub fn pr_curve(m: &MatchResult, cls: CellClass) -> Result<Vec<(f64, f64)>, EvalError> {
    let n = m.gt_count(cls);
    if n == 0 {
        return Err(EvalError::NoGroundTruth(cls));
    }
    Ok(m.prefixes(cls)
        .into_iter()
        .skip(1)
        .map(|(tp, fp)| (ratio_to_f64(tp as u128, n as u128), ratio_to_f64(tp as u128, (tp + fp) as u128)))
        .collect())
}

/// 11-point interpolated AP, computed in exact fractions and rounded once.
pub fn average_precision_11pt(m: &MatchResult, cls: CellClass) -> Result<f64, EvalError> {
    let n = m.gt_count(cls) as u128;
    if n == 0 {
        return Err(EvalError::NoGroundTruth(cls));
    }
    let prefixes = m.prefixes(cls);
    // best precision from each rank onwards
    let mut suffix_max = vec![Frac::ZERO; prefixes.len() + 1];
    for k in (1..prefixes.len()).rev() {
        let (tp, fp) = prefixes[k];
        suffix_max[k] = suffix_max[k + 1].max(Frac::new(tp as u128, (tp + fp) as u128));
    }
    let mut sum = Frac::ZERO;
    let mut k = 1;
    for i in 0..=10u128 {
        // first rank whose recall reaches i/10
        while k < prefixes.len() && 10 * (prefixes[k].0 as u128) < i * n {
            k += 1;
        }
        if k < prefixes.len() {
            sum = sum.checked_add(suffix_max[k]).expect("AP fraction overflow");
        }
    }
    Ok(ratio_to_f64(sum.n, sum.d * 11))
}

pub fn lamr_reference_points() -> [f64; 9] {
    std::array::from_fn(|i| 10f64.powf(-2.0 + 0.25 * i as f64))
}

/// Log-average miss rate over the standard nine FPPI points.
pub fn log_average_miss_rate(m: &MatchResult, cls: CellClass, images: usize) -> Result<f64, EvalError> {
    log_average_miss_rate_at(m, cls, images, &lamr_reference_points())
}

/// At each FPPI point, the lowest miss rate reached without exceeding it;
/// geometric mean of those, floored at [`LAMR_FLOOR`].
pub fn log_average_miss_rate_at(m: &MatchResult, cls: CellClass, images: usize, points: &[f64]) -> Result<f64, EvalError> {
    let n = m.gt_count(cls);
    if n == 0 {
        return Err(EvalError::NoGroundTruth(cls));
    }
    if images == 0 || points.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let prefixes = m.prefixes(cls);
    let mut log_sum = 0.0;
    for &r in points {
        // fp and tp are non-decreasing, so the last admissible prefix has the lowest miss rate
        let k = prefixes.iter().rposition(|&(_, fp)| fp as f64 / images as f64 <= r).unwrap_or(0);
        let mr = 1.0 - prefixes[k].0 as f64 / n as f64;
        log_sum += mr.max(LAMR_FLOOR).ln();
    }
    Ok((log_sum / points.len() as f64).exp())
}

/// `(tp, fp, fn)` for `cls` counting predictions with confidence ≥ `min_confidence`.
pub fn class_counts_at_operating_point(m: &MatchResult, cls: CellClass, min_confidence: f64) -> (u64, u64, u64) {
    let (mut tp, mut fp) = (0, 0);
    for p in m.ranked(cls).filter(|p| p.confidence >= min_confidence) {
        if p.tp {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    (tp, fp, m.gt_count(cls) - tp)
}
