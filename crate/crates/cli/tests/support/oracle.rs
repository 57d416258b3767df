//! Slow, obviously-correct reference implementations of the evaluation
//! metrics. Box coordinates are converted to exact rationals, so IoU
//! thresholds and precision/recall are decided without rounding.

use std::collections::{BTreeMap, BTreeSet};

use hct_core::dataset::{AnnotationRecord, TileRef};
use hct_core::detection::Detection;
use hct_core::geometry::BBox;
use hct_core::taxonomy::CellClass;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

pub fn qi(n: u64, d: u64) -> Q {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn f(x: &Q) -> f64 {
    x.to_f64().expect("representable")
}

pub fn iou_exact(a: &BBox, b: &BBox) -> Q {
    let two = q(2.0);
    let corners = |bb: &BBox| {
        let (cx, cy, w, h) = (q(bb.cx), q(bb.cy), q(bb.w), q(bb.h));
        (&cx - &w / &two, &cy - &h / &two, &cx + &w / &two, &cy + &h / &two)
    };
    let (ax0, ay0, ax1, ay1) = corners(a);
    let (bx0, by0, bx1, by1) = corners(b);
    let iw = ax1.clone().min(bx1.clone()) - ax0.clone().max(bx0.clone());
    let ih = ay1.clone().min(by1.clone()) - ay0.clone().max(by0.clone());
    if iw <= Q::zero() || ih <= Q::zero() {
        return Q::zero();
    }
    let inter = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - &inter;
    inter / union
}

/// Prediction indices by confidence (desc), area, then box fields, then input position.
fn ranked(preds: &[Detection]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&preds[i], &preds[j]);
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then((a.bbox.w * a.bbox.h).partial_cmp(&(b.bbox.w * b.bbox.h)).unwrap())
            .then(a.bbox.cx.partial_cmp(&b.bbox.cx).unwrap())
            .then(a.bbox.cy.partial_cmp(&b.bbox.cy).unwrap())
            .then(a.bbox.w.partial_cmp(&b.bbox.w).unwrap())
            .then(a.bbox.h.partial_cmp(&b.bbox.h).unwrap())
            .then(i.cmp(&j))
    });
    idx
}

struct Gt<'a> {
    tile: &'a TileRef,
    cls: CellClass,
    bbox: BBox,
}

fn flat(gts: &[AnnotationRecord]) -> Vec<Gt<'_>> {
    gts.iter().flat_map(|r| r.boxes.iter().map(move |b| Gt { tile: &r.tile, cls: b.cls, bbox: b.bbox })).collect()
}

/// Greedy matching. With `same_class` a prediction may only take a ground
/// truth of its own class. Returns, per ranked prediction, the matched
/// ground-truth index.
fn greedy(preds: &[Detection], gts: &[Gt], threshold: &Q, same_class: bool) -> Vec<(usize, Option<usize>)> {
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::new();
    for i in ranked(preds) {
        let p = &preds[i];
        let mut best: Option<(usize, Q)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.tile != &p.tile || (same_class && gt.cls != p.cls) {
                continue;
            }
            let v = iou_exact(&p.bbox, &gt.bbox);
            if &v >= threshold && best.as_ref().is_none_or(|(_, b)| &v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = &best {
            taken[*g] = true;
        }
        out.push((i, best.map(|(g, _)| g)));
    }
    out
}

/// Cumulative `(tp, fp)` over the ranked predictions of one class, with the
/// empty prefix first.
pub fn class_prefixes(preds: &[Detection], gts: &[AnnotationRecord], threshold: f64, cls: CellClass) -> (Vec<(u64, u64)>, u64) {
    let flat = flat(gts);
    let n_gt = flat.iter().filter(|g| g.cls == cls).count() as u64;
    let mut acc = vec![(0, 0)];
    for (i, hit) in greedy(preds, &flat, &q(threshold), true) {
        if preds[i].cls != cls {
            continue;
        }
        let (tp, fp) = *acc.last().unwrap();
        acc.push(if hit.is_some() { (tp + 1, fp) } else { (tp, fp + 1) });
    }
    (acc, n_gt)
}

pub struct ClassOracle {
    pub precision: Q,
    pub recall: Q,
    pub f1: Q,
    pub ap: Q,
    pub lamr: f64,
}

pub fn class_oracle(preds: &[Detection], gts: &[AnnotationRecord], threshold: f64, cls: CellClass) -> Option<ClassOracle> {
    let (prefixes, n_gt) = class_prefixes(preds, gts, threshold, cls);
    if n_gt == 0 {
        return None;
    }
    let &(tp, fp) = prefixes.last().unwrap();
    let precision = if tp + fp == 0 { Q::zero() } else { qi(tp, tp + fp) };
    let recall = qi(tp, n_gt);
    let f1 = if precision.is_zero() && recall.is_zero() {
        Q::zero()
    } else {
        q(2.0) * &precision * &recall / (&precision + &recall)
    };

    // 11-point interpolation, straight from the definition
    let mut ap = Q::zero();
    for i in 0..=10u64 {
        let level = qi(i, 10);
        let best = prefixes[1..]
            .iter()
            .filter(|&&(tp, _)| qi(tp, n_gt) >= level)
            .map(|&(tp, fp)| qi(tp, tp + fp))
            .max()
            .unwrap_or_else(Q::zero);
        ap += best;
    }
    ap /= qi(11, 1);

    let tiles: BTreeSet<&TileRef> = preds.iter().map(|p| &p.tile).chain(gts.iter().map(|g| &g.tile)).collect();
    let images = tiles.len() as f64;
    let mut logs = 0.0;
    for i in 0..9 {
        let r = 10f64.powf(-2.0 + 0.25 * i as f64);
        let mut best_mr = 1.0f64;
        for &(tp, fp) in &prefixes {
            if fp as f64 / images <= r {
                best_mr = best_mr.min(1.0 - tp as f64 / n_gt as f64);
            }
        }
        logs += best_mr.max(1e-10).ln();
    }
    Some(ClassOracle { precision, recall, f1, ap, lamr: (logs / 9.0).exp() })
}

/// Mann-Whitney over all positive/negative pairs; ties count one half.
pub fn auc_oracle(scored: &[(f64, bool)]) -> f64 {
    let (mut wins, mut pairs) = (0u64, 0u64);
    for &(sp, lp) in scored {
        if !lp {
            continue;
        }
        for &(sn, ln) in scored {
            if ln {
                continue;
            }
            pairs += 1;
            wins += if sp > sn { 2 } else if sp == sn { 1 } else { 0 };
        }
    }
    wins as f64 / (2 * pairs) as f64
}

/// Class-agnostic matching; `counts[gt class][pred class]`.
pub fn confusion_oracle(
    preds: &[Detection],
    gts: &[AnnotationRecord],
    threshold: f64,
    classes: &[CellClass],
) -> (Vec<Vec<u64>>, Vec<u64>) {
    let flat = flat(gts);
    let pos: BTreeMap<CellClass, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let mut counts = vec![vec![0; classes.len()]; classes.len()];
    let mut totals = vec![0; classes.len()];
    for g in &flat {
        if let Some(&r) = pos.get(&g.cls) {
            totals[r] += 1;
        }
    }
    for (i, hit) in greedy(preds, &flat, &q(threshold), false) {
        if let Some(g) = hit {
            if let (Some(&r), Some(&c)) = (pos.get(&flat[g].cls), pos.get(&preds[i].cls)) {
                counts[r][c] += 1;
            }
        }
    }
    (counts, totals)
}
