pub mod oracle;

use hct_core::dataset::{AnnotatedBox, AnnotationRecord, BoxSource, TileRef};
use hct_core::detection::Detection;
use hct_core::geometry::BBox;
use hct_core::taxonomy::CellClass;
use rand::Rng;

/// A box on a 1/64 grid, so corner arithmetic is exact in binary floating point.
pub fn grid_box<R: Rng>(rng: &mut R) -> BBox {
    let w = rng.random_range(4..=20) as f64 / 64.0;
    let h = rng.random_range(4..=20) as f64 / 64.0;
    let cx = rng.random_range(10..=54) as f64 / 64.0;
    let cy = rng.random_range(10..=54) as f64 / 64.0;
    BBox::new(cx, cy, w, h)
}

fn jitter<R: Rng>(rng: &mut R, b: &BBox) -> BBox {
    let step = |rng: &mut R| rng.random_range(-2..=2) as f64 / 64.0;
    BBox::new(
        (b.cx + step(rng)).clamp(0.0, 1.0),
        (b.cy + step(rng)).clamp(0.0, 1.0),
        (b.w + step(rng)).max(2.0 / 64.0),
        (b.h + step(rng)).max(2.0 / 64.0),
    )
}

/// Up to 20 ground-truth and 20 predicted boxes over a few tiles and
/// classes. Predictions mostly sit near a ground truth; confidences are
/// coarse so ties are common.
pub fn detection_instance<R: Rng>(rng: &mut R) -> (Vec<Detection>, Vec<AnnotationRecord>) {
    let tiles: Vec<TileRef> = (0..rng.random_range(1..=4)).map(|i| TileRef::file("oracle", format!("t{i}"))).collect();
    let n_classes = rng.random_range(1..=3);
    let classes: Vec<CellClass> = (0..n_classes).map(|_| CellClass::EVALUATED[rng.random_range(0..CellClass::EVALUATED.len())]).collect();
    let pick = |rng: &mut R| classes[rng.random_range(0..classes.len())];

    let mut gts: Vec<AnnotationRecord> = tiles.iter().map(|t| AnnotationRecord::new(t.clone(), Vec::new())).collect();
    for _ in 0..rng.random_range(1..=20) {
        let t = rng.random_range(0..gts.len());
        let cls = pick(rng);
        gts[t].boxes.push(AnnotatedBox { bbox: grid_box(rng), cls, source: BoxSource::Human, confidence: None });
    }
    let mut preds = Vec::new();
    for _ in 0..rng.random_range(0..=20) {
        let t = rng.random_range(0..gts.len());
        let near = !gts[t].boxes.is_empty() && rng.random_bool(0.7);
        let (bbox, cls) = if near {
            let g = &gts[t].boxes[rng.random_range(0..gts[t].boxes.len())];
            let cls = if rng.random_bool(0.8) { g.cls } else { pick(rng) };
            (if rng.random_bool(0.3) { g.bbox } else { jitter(rng, &g.bbox) }, cls)
        } else {
            (grid_box(rng), pick(rng))
        };
        let confidence = rng.random_range(1..=10) as f64 / 10.0;
        preds.push(Detection { bbox, cls, confidence, tile: tiles[t].clone() });
    }
    (preds, gts)
}

/// Up to 1000 scores on a 1/100 grid with random labels; both labels present.
pub fn score_instance<R: Rng>(rng: &mut R) -> Vec<(f64, bool)> {
    let n = rng.random_range(2..=1000);
    let skew = rng.random_range(0.0..0.4);
    let mut out: Vec<(f64, bool)> = (0..n)
        .map(|_| {
            let label = rng.random_bool(0.5);
            let base: f64 = rng.random_range(0.0..1.0) + if label { skew } else { 0.0 };
            ((base.min(1.0) * 100.0).round() / 100.0, label)
        })
        .collect();
    out[0].1 = true;
    out[1].1 = false;
    out
}
