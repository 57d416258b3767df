//! Multi-image augmentation: cutmix (two tiles) and mosaic (four tiles).

use image::imageops::{self, FilterType};
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{claims, reframe};
use super::AnnotatedBox;
use crate::geometry::{BBox, Rect};

pub type Sample = (RgbImage, Vec<AnnotatedBox>);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixError {
    #[error("input tiles differ in size: {0:?} vs {1:?}")]
    SizeMismatch((u32, u32), (u32, u32)),
}

fn pixel_rect(r: &Rect, w: u32, h: u32) -> (u32, u32, u32, u32) {
    let snap = |v: f64, n: u32| ((v * n as f64).round().max(0.0) as u32).min(n);
    (snap(r.x0, w), snap(r.y0, h), snap(r.x1, w), snap(r.y1, h))
}

/// Shrink `b` by the part of `region` that spans it completely along one
/// axis; otherwise (a hole or a corner bite) leave it.
fn subtract(b: &BBox, region: &Rect) -> BBox {
    let r = b.rect();
    let hit = r.intersect(region);
    if hit.width() <= 0.0 || hit.height() <= 0.0 {
        return *b;
    }
    let spans_y = region.y0 <= r.y0 && region.y1 >= r.y1;
    let spans_x = region.x0 <= r.x0 && region.x1 >= r.x1;
    let mut out = r;
    if spans_y {
        if region.x0 <= r.x0 {
            out.x0 = out.x0.max(region.x1);
        } else if region.x1 >= r.x1 {
            out.x1 = out.x1.min(region.x0);
        }
    } else if spans_x {
        if region.y0 <= r.y0 {
            out.y0 = out.y0.max(region.y1);
        } else if region.y1 >= r.y1 {
            out.y1 = out.y1.min(region.y0);
        }
    }
    BBox::from_rect(out)
}

/// Paste `region` (normalized, snapped to pixels) of `b` into `a` at the
/// same place. Boxes of `a` whose center is covered are dropped, the rest
/// lose any fully covered side; boxes of `b` centered inside the region are
/// clipped to it.
pub fn cutmix_region(a: &Sample, b: &Sample, region: Rect) -> Result<Sample, MixError> {
    let (w, h) = a.0.dimensions();
    if b.0.dimensions() != (w, h) {
        return Err(MixError::SizeMismatch((w, h), b.0.dimensions()));
    }
    let (px0, py0, px1, py1) = pixel_rect(&region, w, h);
    if px1 <= px0 || py1 <= py0 {
        return Ok(a.clone());
    }
    let region = Rect::new(px0 as f64 / w as f64, py0 as f64 / h as f64, px1 as f64 / w as f64, py1 as f64 / h as f64);

    let mut img = a.0.clone();
    let patch = imageops::crop_imm(&b.0, px0, py0, px1 - px0, py1 - py0).to_image();
    imageops::replace(&mut img, &patch, px0 as i64, py0 as i64);

    let mut boxes: Vec<AnnotatedBox> = reframe(&a.1, &Rect::unit(), &Rect::unit())
        .into_iter()
        .filter(|x| !claims(&region, x.bbox.cx, x.bbox.cy))
        .map(|x| AnnotatedBox { bbox: subtract(&x.bbox, &region), ..x })
        .filter(|x| x.bbox.is_valid())
        .collect();
    boxes.extend(reframe(&b.1, &region, &region));
    Ok((img, boxes))
}

/// Cutmix with a seeded region whose area is `1 − λ`, `λ ~ U(0, 1)`.
pub fn cutmix(a: &Sample, b: &Sample, seed: u64) -> Result<Sample, MixError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda: f64 = rng.random();
    let side = (1.0 - lambda).sqrt();
    let x0 = rng.random_range(0.0..=1.0 - side);
    let y0 = rng.random_range(0.0..=1.0 - side);
    cutmix_region(a, b, Rect::new(x0, y0, x0 + side, y0 + side))
}

/// 2×2 mosaic split at normalized point `(sx, sy)`. Each input is scaled
/// uniformly by `max` of its quadrant's sides, anchored at the outer corner
/// of its quadrant, and cropped at the split lines. Inputs go top-left,
/// top-right, bottom-left, bottom-right.
pub fn mosaic_at(inputs: &[Sample; 4], split: (f64, f64)) -> Result<Sample, MixError> {
    let (w, h) = inputs[0].0.dimensions();
    for s in &inputs[1..] {
        if s.0.dimensions() != (w, h) {
            return Err(MixError::SizeMismatch((w, h), s.0.dimensions()));
        }
    }
    let psx = ((split.0 * w as f64).round() as u32).clamp(1, w - 1);
    let psy = ((split.1 * h as f64).round() as u32).clamp(1, h - 1);
    let mut img = RgbImage::new(w, h);
    let mut boxes = Vec::new();

    let quadrants = [(0, 0, psx, psy), (psx, 0, w, psy), (0, psy, psx, h), (psx, psy, w, h)];
    for (q, (input, &(qx0, qy0, qx1, qy1))) in inputs.iter().zip(&quadrants).enumerate() {
        let (qw, qh) = (qx1 - qx0, qy1 - qy0);
        let s = (qw as f64 / w as f64).max(qh as f64 / h as f64);
        let (sw, sh) = (((w as f64 * s).round() as u32).max(qw), ((h as f64 * s).round() as u32).max(qh));
        let scaled = imageops::resize(&input.0, sw, sh, FilterType::Triangle);
        // keep the part of the scaled image next to the outer corner
        let cx0 = if q % 2 == 0 { sw - qw } else { 0 };
        let cy0 = if q < 2 { sh - qh } else { 0 };
        let part = imageops::crop_imm(&scaled, cx0, cy0, qw, qh).to_image();
        imageops::replace(&mut img, &part, qx0 as i64, qy0 as i64);

        let visible = Rect::new(cx0 as f64 / sw as f64, cy0 as f64 / sh as f64, (cx0 + qw) as f64 / sw as f64, (cy0 + qh) as f64 / sh as f64);
        let target = Rect::new(qx0 as f64 / w as f64, qy0 as f64 / h as f64, qx1 as f64 / w as f64, qy1 as f64 / h as f64);
        boxes.extend(reframe(&reframe(&input.1, &Rect::unit(), &Rect::unit()), &visible, &target));
    }
    Ok((img, boxes))
}

/// Mosaic with a seeded split point in `[0.25, 0.75]²`.
pub fn mosaic(inputs: &[Sample; 4], seed: u64) -> Result<Sample, MixError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = (rng.random_range(0.25..=0.75), rng.random_range(0.25..=0.75));
    mosaic_at(inputs, split)
}
