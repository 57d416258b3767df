//! Cell detection post-processing: class validation, confidence filtering
//! and per-class DIoU non-maximum suppression.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, DetectorBackend, RawDetection};
use crate::dataset::{AnnotatedBox, AnnotationRecord, BoxSource, TileRef};
use crate::geometry::{diou, BBox};
use crate::taxonomy::CellClass;
use crate::wsi::Tile;

pub const DEFAULT_CONF_THRESH: f64 = 0.25;
pub const DEFAULT_NMS_IOU: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub cls: CellClass,
    pub confidence: f64,
    pub tile: TileRef,
}

impl Detection {
    /// Ranking used everywhere detections are ordered: confidence
    /// descending, then smaller box, then lexicographic box.
    pub fn rank_cmp(&self, other: &Detection) -> Ordering {
        other.confidence.total_cmp(&self.confidence).then_with(|| self.bbox.tie_break(&other.bbox))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend emitted unknown class id {0}")]
    UnknownClassId(u32),
    #[error("backend emitted an invalid box {0:?}")]
    InvalidBox(RawDetection),
}

pub fn from_raw(raw: &RawDetection, tile: TileRef) -> Result<Detection, DetectionError> {
    let cls = CellClass::from_id(raw.class_id).ok_or(DetectionError::UnknownClassId(raw.class_id))?;
    let bbox = BBox::new(raw.cx, raw.cy, raw.w, raw.h);
    if !bbox.is_valid() || !(0.0..=1.0).contains(&raw.confidence) {
        return Err(DetectionError::InvalidBox(*raw));
    }
    Ok(Detection { bbox, cls, confidence: raw.confidence, tile })
}

/// Run the detector on one tile; no filtering.
pub fn detect_raw(backend: &dyn DetectorBackend, tile: &Tile) -> Result<Vec<Detection>, DetectionError> {
    let tile_ref = TileRef::grid(tile.slide_id.clone(), tile.coord);
    backend.detect(tile)?.iter().map(|r| from_raw(r, tile_ref.clone())).collect()
}

/// Drop detections below `conf_thresh`, then per class keep the best-ranked
/// box and suppress every remaining box whose DIoU with it exceeds
/// `nms_iou`. Output is in rank order.
pub fn diou_nms(raw: &[Detection], conf_thresh: f64, nms_iou: f64) -> Vec<Detection> {
    let mut candidates: Vec<&Detection> = raw.iter().filter(|d| d.confidence >= conf_thresh).collect();
    candidates.sort_by(|a, b| a.rank_cmp(b));

    let mut kept: Vec<&Detection> = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let suppressed = kept
            .iter()
            .any(|k| k.cls == cand.cls && k.tile == cand.tile && diou(&k.bbox, &cand.bbox) > nms_iou);
        if !suppressed {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Group detections into per-tile annotation records (tiles in order of
/// first appearance), marking boxes as model output with their confidence.
pub fn detections_to_annotations(dets: &[Detection]) -> Vec<AnnotationRecord> {
    let mut order: Vec<TileRef> = Vec::new();
    let mut groups: BTreeMap<TileRef, Vec<AnnotatedBox>> = BTreeMap::new();
    for d in dets {
        let entry = groups.entry(d.tile.clone()).or_insert_with(|| {
            order.push(d.tile.clone());
            Vec::new()
        });
        entry.push(AnnotatedBox { bbox: d.bbox, cls: d.cls, source: BoxSource::Model, confidence: Some(d.confidence) });
    }
    order
        .into_iter()
        .map(|t| {
            let boxes = groups.remove(&t).unwrap_or_default();
            AnnotationRecord::new(t, boxes)
        })
        .collect()
}

/// Inverse of [`detections_to_annotations`]; boxes without a confidence
/// (human annotations) get confidence 1.
pub fn annotations_to_detections(records: &[AnnotationRecord]) -> Vec<Detection> {
    records
        .iter()
        .flat_map(|r| {
            r.boxes.iter().map(move |b| Detection {
                bbox: b.bbox,
                cls: b.cls,
                confidence: b.confidence.unwrap_or(1.0),
                tile: r.tile.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendInfo;
    use crate::geometry::iou;
    use crate::wsi::GridCoord;
    use proptest::prelude::*;
    use CellClass::*;

    fn tref() -> TileRef {
        TileRef::grid("s", GridCoord::new(0, 0))
    }

    fn det(cx: f64, cy: f64, w: f64, h: f64, cls: CellClass, confidence: f64) -> Detection {
        Detection { bbox: BBox::new(cx, cy, w, h), cls, confidence, tile: tref() }
    }

    #[test]
    fn concentric_high_overlap_suppressed() {
        let a = det(0.5, 0.5, 0.4, 0.4, Blast, 0.9);
        let b = det(0.5, 0.5, 0.4, 0.36, Blast, 0.8);
        assert!((iou(&a.bbox, &b.bbox) - 0.9).abs() < 1e-12);
        let out = diou_nms(&[b.clone(), a.clone()], 0.25, 0.45);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn different_classes_never_suppress() {
        let a = det(0.5, 0.5, 0.4, 0.4, Blast, 0.9);
        let b = det(0.5, 0.5, 0.4, 0.4, Lymphocyte, 0.8);
        assert_eq!(diou_nms(&[a.clone(), b.clone()], 0.25, 0.45), vec![a, b]);
    }

    #[test]
    fn empty_and_low_confidence() {
        assert!(diou_nms(&[], 0.25, 0.45).is_empty());
        assert!(diou_nms(&[det(0.5, 0.5, 0.1, 0.1, Blast, 0.2)], 0.25, 0.45).is_empty());
    }

    #[test]
    fn center_distance_rescues_overlapping_neighbour() {
        // IoU above threshold but the center penalty brings DIoU below it
        let a = det(0.40, 0.5, 0.2, 0.2, Blast, 0.9);
        let b = det(0.465, 0.5, 0.2, 0.2, Blast, 0.8);
        let plain = iou(&a.bbox, &b.bbox);
        let d = diou(&a.bbox, &b.bbox);
        assert!(plain > 0.5 && d < 0.5, "iou {plain} diou {d}");
        assert_eq!(diou_nms(&[a, b], 0.25, 0.5).len(), 2);
    }

    #[test]
    fn ties_break_on_smaller_area() {
        let big = det(0.5, 0.5, 0.4, 0.4, Blast, 0.7);
        let small = det(0.5, 0.5, 0.38, 0.38, Blast, 0.7);
        assert_eq!(diou_nms(&[big, small.clone()], 0.25, 0.45), vec![small]);
    }

    struct Fixed(Vec<RawDetection>);
    impl DetectorBackend for Fixed {
        fn info(&self) -> BackendInfo {
            BackendInfo::new("fixed", "1")
        }
        fn detect(&self, _: &Tile) -> Result<Vec<RawDetection>, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn blank_tile() -> Tile {
        Tile { slide_id: "s".into(), coord: GridCoord::new(0, 0), origin_px: (0, 0), pixels: image::RgbImage::new(4, 4) }
    }

    #[test]
    fn unknown_class_id_rejected() {
        let raw = RawDetection { cx: 0.5, cy: 0.5, w: 0.1, h: 0.1, class_id: 23, confidence: 0.9 };
        assert!(matches!(detect_raw(&Fixed(vec![raw]), &blank_tile()), Err(DetectionError::UnknownClassId(23))));
        let raw = RawDetection { class_id: 4, w: 0.0, ..raw };
        assert!(matches!(detect_raw(&Fixed(vec![raw]), &blank_tile()), Err(DetectionError::InvalidBox(_))));
        assert!(detect_raw(&Fixed(vec![]), &blank_tile()).unwrap().is_empty());
    }

    #[test]
    fn annotation_conversion() {
        let mut dets = vec![det(0.1, 0.1, 0.1, 0.1, Blast, 0.9), det(0.5, 0.5, 0.1, 0.1, Neutrophil, 0.8)];
        let mut third = det(0.7, 0.7, 0.1, 0.1, Erythroblast, 0.7);
        third.tile = TileRef::grid("s", GridCoord::new(0, 1));
        dets.push(third);
        let records = detections_to_annotations(&dets);
        assert_eq!(records.len(), 2);
        assert_eq!(records.iter().map(|r| r.boxes.len()).sum::<usize>(), 3);
        assert_eq!(annotations_to_detections(&records), dets);
        assert_eq!(detections_to_annotations(&annotations_to_detections(&records)), records);
        assert!(detections_to_annotations(&[]).is_empty());
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec(
            (0.05..0.95f64, 0.05..0.95f64, 0.02..0.3f64, 0.02..0.3f64, 0usize..3, 0.0..1.0f64),
            0..30,
        )
        .prop_map(|v| v.into_iter().map(|(x, y, w, h, c, p)| det(x, y, w, h, CellClass::ALL[c], p)).collect())
    }

    proptest! {
        #[test]
        fn nms_subset_idempotent_and_separated(dets in arb_dets(), conf in 0.0..0.6f64, thr in 0.2..0.8f64) {
            let once = diou_nms(&dets, conf, thr);
            prop_assert!(once.iter().all(|d| dets.contains(d)));
            prop_assert_eq!(diou_nms(&once, conf, thr), once.clone());
            for (i, a) in once.iter().enumerate() {
                for b in &once[i + 1..] {
                    if a.cls == b.cls {
                        prop_assert!(diou(&a.bbox, &b.bbox) <= thr);
                    }
                }
            }
        }
    }
}
