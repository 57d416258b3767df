//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns JSON strings; the page parses them with
//! `JSON.parse`. The plain-Rust functions underneath are what the tests use.

use hct_core::dataset::{AnnotatedBox, AnnotationRecord, TileRef};
use hct_core::detection::{diou_nms, Detection};
use hct_core::eval::{evaluate_class, match_detections, pr_curve};
use hct_core::geometry::BBox;
use hct_core::reference::{HistogramSampler, REFERENCE_CLASS_WEIGHTS};
use hct_core::stats::{bm_me_ratio, ConvergenceCriteria, Hct, Ihct};
use hct_core::taxonomy::CellClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ConvergenceRun {
    pub tiles_seen: usize,
    pub converged: bool,
    /// Chi-square distance after each tile from the second one on.
    pub distances: Vec<f64>,
    pub ndc_percent: Vec<(CellClass, f64)>,
    pub bm_me: Option<f64>,
}

/// Stream i.i.d. reference tiles into an integrated histogram until it
/// converges or `max_tiles` is reached.
pub fn run_convergence(
    seed: u64,
    objects_per_tile: f64,
    threshold: f64,
    patience: usize,
    max_tiles: usize,
) -> Result<ConvergenceRun, String> {
    let sampler = HistogramSampler::new(&REFERENCE_CLASS_WEIGHTS, objects_per_tile)
        .ok_or_else(|| format!("objects per tile must be positive, got {objects_per_tile}"))?;
    if patience == 0 || threshold <= 0.0 {
        return Err("threshold and patience must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ihct = Ihct::new(ConvergenceCriteria { threshold, patience });
    while !ihct.converged && ihct.tiles_seen < max_tiles {
        ihct.accumulate_forced(&Hct { counts: sampler.sample_counts(&mut rng), tile: None });
    }
    let ndc = ihct.counts.subtotal(&CellClass::NDC).max(1) as f64;
    Ok(ConvergenceRun {
        tiles_seen: ihct.tiles_seen,
        converged: ihct.converged,
        distances: ihct.trace.iter().map(|p| p.distance).collect(),
        ndc_percent: CellClass::NDC.iter().map(|&c| (c, 100.0 * ihct.counts.get(c) as f64 / ndc)).collect(),
        bm_me: bm_me_ratio(&ihct.counts),
    })
}

/// A box drawn on the demo canvas, in unit coordinates.
#[derive(Debug, Clone, Deserialize)]
pub struct DemoBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub cls: CellClass,
    #[serde(default)]
    pub confidence: f64,
}

fn demo_tile() -> TileRef {
    TileRef::file("demo", "canvas")
}

fn to_detections(boxes: &[DemoBox]) -> Result<Vec<Detection>, String> {
    boxes
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let bbox = BBox::new(b.cx, b.cy, b.w, b.h);
            if !bbox.is_valid() || !(0.0..=1.0).contains(&b.confidence) {
                return Err(format!("box {i} is invalid"));
            }
            Ok(Detection { bbox, cls: b.cls, confidence: b.confidence, tile: demo_tile() })
        })
        .collect()
}

/// Indices (into `boxes`) of the detections kept by DIoU NMS, in rank order.
pub fn nms_kept(boxes: &[DemoBox], conf_thresh: f64, nms_iou: f64) -> Result<Vec<usize>, String> {
    let dets = to_detections(boxes)?;
    let mut used = vec![false; dets.len()];
    Ok(diou_nms(&dets, conf_thresh, nms_iou)
        .iter()
        .map(|k| {
            let i = (0..dets.len()).find(|&i| !used[i] && dets[i] == *k).expect("kept boxes come from the input");
            used[i] = true;
            i
        })
        .collect())
}

#[derive(Debug, Serialize)]
pub struct ClassCurve {
    pub cls: CellClass,
    /// `(recall, precision)` after each ranked prediction.
    pub curve: Vec<(f64, f64)>,
    pub ap: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub lamr: f64,
}

/// Per-class PR curves and scores for predictions against ground truth on
/// a single canvas.
pub fn class_curves(preds: &[DemoBox], gts: &[DemoBox], iou_threshold: f64) -> Result<Vec<ClassCurve>, String> {
    let dets = to_detections(preds)?;
    let truth = AnnotationRecord::new(
        demo_tile(),
        gts.iter().map(|g| AnnotatedBox::human(BBox::new(g.cx, g.cy, g.w, g.h), g.cls)).collect(),
    );
    let m = match_detections(&dets, &[truth], iou_threshold);
    let mut out = Vec::new();
    for cls in CellClass::ALL {
        if m.gt_count(cls) == 0 {
            continue;
        }
        let score = evaluate_class(&m, cls).map_err(|e| e.to_string())?;
        out.push(ClassCurve {
            cls,
            curve: pr_curve(&m, cls).map_err(|e| e.to_string())?,
            ap: score.ap,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
            lamr: score.lamr,
        });
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn parse<T: for<'a> Deserialize<'a>>(json: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = simulateConvergence)]
pub fn simulate_convergence(
    seed: u32,
    objects_per_tile: f64,
    threshold: f64,
    patience: u32,
    max_tiles: u32,
) -> Result<String, JsError> {
    to_js(run_convergence(seed as u64, objects_per_tile, threshold, patience as usize, max_tiles as usize))
}

#[wasm_bindgen(js_name = nms)]
pub fn nms(boxes_json: &str, conf_thresh: f64, nms_iou: f64) -> Result<String, JsError> {
    to_js(parse::<Vec<DemoBox>>(boxes_json).and_then(|b| nms_kept(&b, conf_thresh, nms_iou)))
}

#[wasm_bindgen(js_name = precisionRecall)]
pub fn precision_recall(preds_json: &str, gts_json: &str, iou_threshold: f64) -> Result<String, JsError> {
    to_js(parse::<Vec<DemoBox>>(preds_json).and_then(|p| {
        let g = parse::<Vec<DemoBox>>(gts_json)?;
        class_curves(&p, &g, iou_threshold)
    }))
}

#[wasm_bindgen(js_name = classNames)]
pub fn class_names() -> String {
    serde_json::to_string(&CellClass::ALL.map(|c| c.name())).expect("static names")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64, cls: CellClass, confidence: f64) -> DemoBox {
        DemoBox { cx, cy, w: 0.2, h: 0.2, cls, confidence }
    }

    #[test]
    fn convergence_stops_when_criteria_met() {
        let run = run_convergence(3, 9.5, 5e-6, 5, 5000).unwrap();
        assert!(run.converged);
        assert_eq!(run.distances.len(), run.tiles_seen - 1);
        assert!(run.distances[run.distances.len() - 5..].iter().all(|&d| d < 5e-6));
        let total: f64 = run.ndc_percent.iter().map(|p| p.1).sum();
        assert!((total - 100.0).abs() < 1e-9);

        let capped = run_convergence(3, 9.5, 1e-12, 5, 40).unwrap();
        assert_eq!((capped.tiles_seen, capped.converged), (40, false));
        assert!(run_convergence(3, 0.0, 5e-6, 5, 10).is_err());
    }

    #[test]
    fn nms_reports_input_indices() {
        let boxes = vec![
            b(0.5, 0.5, CellClass::Blast, 0.6),
            b(0.51, 0.5, CellClass::Blast, 0.9),
            b(0.51, 0.5, CellClass::Lymphocyte, 0.8),
            b(0.2, 0.2, CellClass::Blast, 0.1),
        ];
        assert_eq!(nms_kept(&boxes, 0.25, 0.45).unwrap(), vec![1, 2]);
        assert_eq!(nms_kept(&boxes, 0.0, 0.45).unwrap(), vec![1, 2, 3]);
        let dup = vec![b(0.5, 0.5, CellClass::Blast, 0.6), b(0.5, 0.5, CellClass::Blast, 0.6)];
        assert_eq!(nms_kept(&dup, 0.25, 1.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn curves_per_class() {
        let gts = vec![b(0.3, 0.3, CellClass::Blast, 0.0), b(0.7, 0.7, CellClass::Blast, 0.0)];
        let preds = vec![b(0.3, 0.3, CellClass::Blast, 0.9), b(0.5, 0.1, CellClass::Blast, 0.8)];
        let curves = class_curves(&preds, &gts, 0.5).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        assert_eq!(c.curve, vec![(0.5, 1.0), (0.5, 0.5)]);
        // recall levels 0.0..=0.5 reach precision 1
        assert_eq!(c.ap, 6.0 / 11.0);
        assert_eq!((c.precision, c.recall, c.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn json_entry_points() {
        let kept = nms(r#"[{"cx":0.5,"cy":0.5,"w":0.1,"h":0.1,"cls":"blast","confidence":0.5}]"#, 0.25, 0.45).unwrap();
        assert_eq!(kept, "[0]");
        let names: Vec<String> = serde_json::from_str(&class_names()).unwrap();
        assert_eq!(names.len(), CellClass::COUNT);
    }
}
