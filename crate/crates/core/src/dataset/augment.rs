//! Geometric and photometric augmentation of a tile and its boxes.
//!
//! Geometric ops move boxes with the pixels. Under cropping a box survives
//! iff its center survives, and is then clipped to the visible area.
//! Photometric ops never touch boxes.

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AnnotatedBox;
use crate::geometry::{BBox, Rect};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("crop removed every box")]
    DegenerateCrop,
    #[error("invalid augmentation parameter: {0}")]
    InvalidParams(String),
}

/// Padding colour used when the image shrinks.
pub const FILL: Rgb<u8> = Rgb([114, 114, 114]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum GeometricOp {
    HFlip,
    VFlip,
    /// `k` quarter turns clockwise.
    Rot90 { k: u8 },
    /// Keep the normalized region and resize it back to the tile size.
    Crop { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Zoom about the tile center; factors below 1 pad with [`FILL`].
    Scale { factor: f64 },
}

/// Does `r` claim the point? Half-open, except that the tile's far edge
/// belongs to a region reaching it.
pub(crate) fn claims(r: &Rect, x: f64, y: f64) -> bool {
    let in_x = x >= r.x0 && (x < r.x1 || (r.x1 >= 1.0 && x <= 1.0));
    let in_y = y >= r.y0 && (y < r.y1 || (r.y1 >= 1.0 && y <= 1.0));
    in_x && in_y
}

/// Keep boxes whose center lies in `region`, clip them to it, and map the
/// region onto `target` (both normalized).
pub(crate) fn reframe(boxes: &[AnnotatedBox], region: &Rect, target: &Rect) -> Vec<AnnotatedBox> {
    let sx = target.width() / region.width();
    let sy = target.height() / region.height();
    boxes
        .iter()
        .filter(|b| claims(region, b.bbox.cx, b.bbox.cy))
        .filter_map(|b| {
            let c = b.bbox.rect().intersect(region);
            if region == target && c == b.bbox.rect() {
                // identity mapping of a box already inside: keep it bit-exact
                return Some(b.clone());
            }
            let r = Rect::new(
                target.x0 + (c.x0 - region.x0) * sx,
                target.y0 + (c.y0 - region.y0) * sy,
                target.x0 + (c.x1 - region.x0) * sx,
                target.y0 + (c.y1 - region.y0) * sy,
            );
            let bbox = BBox::from_rect(r.intersect(target));
            bbox.is_valid().then(|| AnnotatedBox { bbox, ..b.clone() })
        })
        .collect()
}

fn snap(v: f64, n: u32) -> u32 {
    ((v * n as f64).round().max(0.0) as u32).min(n)
}

fn crop_op(img: &RgbImage, boxes: &[AnnotatedBox], r: Rect) -> Result<(RgbImage, Vec<AnnotatedBox>), AugmentError> {
    let (w, h) = img.dimensions();
    let (px0, py0, px1, py1) = (snap(r.x0, w), snap(r.y0, h), snap(r.x1, w), snap(r.y1, h));
    if px1 <= px0 || py1 <= py0 {
        return Err(AugmentError::InvalidParams(format!("empty crop {r:?}")));
    }
    let region = Rect::new(px0 as f64 / w as f64, py0 as f64 / h as f64, px1 as f64 / w as f64, py1 as f64 / h as f64);
    let out_boxes = reframe(boxes, &region, &Rect::unit());
    if !boxes.is_empty() && out_boxes.is_empty() {
        return Err(AugmentError::DegenerateCrop);
    }
    let cropped = imageops::crop_imm(img, px0, py0, px1 - px0, py1 - py0).to_image();
    Ok((imageops::resize(&cropped, w, h, FilterType::Triangle), out_boxes))
}

fn apply_one(img: &RgbImage, boxes: &[AnnotatedBox], op: GeometricOp) -> Result<(RgbImage, Vec<AnnotatedBox>), AugmentError> {
    let map = |f: &dyn Fn(BBox) -> BBox| boxes.iter().map(|b| AnnotatedBox { bbox: f(b.bbox), ..b.clone() }).collect();
    Ok(match op {
        GeometricOp::HFlip => (imageops::flip_horizontal(img), map(&|b| BBox::new(1.0 - b.cx, b.cy, b.w, b.h))),
        GeometricOp::VFlip => (imageops::flip_vertical(img), map(&|b| BBox::new(b.cx, 1.0 - b.cy, b.w, b.h))),
        GeometricOp::Rot90 { k } => match k % 4 {
            0 => (img.clone(), boxes.to_vec()),
            1 => (imageops::rotate90(img), map(&|b| BBox::new(1.0 - b.cy, b.cx, b.h, b.w))),
            2 => (imageops::rotate180(img), map(&|b| BBox::new(1.0 - b.cx, 1.0 - b.cy, b.w, b.h))),
            _ => (imageops::rotate270(img), map(&|b| BBox::new(b.cy, 1.0 - b.cx, b.h, b.w))),
        },
        GeometricOp::Crop { x0, y0, x1, y1 } => crop_op(img, boxes, Rect::new(x0, y0, x1, y1))?,
        GeometricOp::Scale { factor } => {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(AugmentError::InvalidParams(format!("scale factor {factor}")));
            }
            if factor >= 1.0 {
                let half = 0.5 / factor;
                crop_op(img, boxes, Rect::new(0.5 - half, 0.5 - half, 0.5 + half, 0.5 + half))?
            } else {
                let (w, h) = img.dimensions();
                let (sw, sh) = (snap(factor, w).max(1), snap(factor, h).max(1));
                let (ox, oy) = ((w - sw) / 2, (h - sh) / 2);
                let mut canvas = RgbImage::from_pixel(w, h, FILL);
                imageops::replace(&mut canvas, &imageops::resize(img, sw, sh, FilterType::Triangle), ox as i64, oy as i64);
                let target = Rect::new(
                    ox as f64 / w as f64,
                    oy as f64 / h as f64,
                    (ox + sw) as f64 / w as f64,
                    (oy + sh) as f64 / h as f64,
                );
                (canvas, reframe(boxes, &Rect::unit(), &target))
            }
        }
    })
}

/// Apply `ops` in order. Boxes reaching past the tile are clipped first.
pub fn apply_geometric(
    img: &RgbImage,
    boxes: &[AnnotatedBox],
    ops: &[GeometricOp],
) -> Result<(RgbImage, Vec<AnnotatedBox>), AugmentError> {
    let mut cur_boxes = reframe(boxes, &Rect::unit(), &Rect::unit());
    let mut cur_img = img.clone();
    for &op in ops {
        let (i, b) = apply_one(&cur_img, &cur_boxes, op)?;
        cur_img = i;
        cur_boxes = b;
    }
    Ok((cur_img, cur_boxes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometricParams {
    pub hflip_p: f64,
    pub vflip_p: f64,
    pub rotate: bool,
    pub crop_p: f64,
    /// Smallest kept side of a random crop, as a fraction of the tile.
    pub crop_min: f64,
    pub scale_range: (f64, f64),
}

impl Default for GeometricParams {
    fn default() -> Self {
        GeometricParams { hflip_p: 0.5, vflip_p: 0.5, rotate: true, crop_p: 0.5, crop_min: 0.6, scale_range: (0.8, 1.2) }
    }
}

impl GeometricParams {
    pub fn sample_ops<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<GeometricOp> {
        let mut ops = Vec::new();
        if rng.random::<f64>() < self.hflip_p {
            ops.push(GeometricOp::HFlip);
        }
        if rng.random::<f64>() < self.vflip_p {
            ops.push(GeometricOp::VFlip);
        }
        if self.rotate {
            let k = rng.random_range(0..4u8);
            if k != 0 {
                ops.push(GeometricOp::Rot90 { k });
            }
        }
        if rng.random::<f64>() < self.crop_p {
            let cw = rng.random_range(self.crop_min.min(1.0)..=1.0);
            let ch = rng.random_range(self.crop_min.min(1.0)..=1.0);
            let x0 = rng.random_range(0.0..=1.0 - cw);
            let y0 = rng.random_range(0.0..=1.0 - ch);
            ops.push(GeometricOp::Crop { x0, y0, x1: x0 + cw, y1: y0 + ch });
        }
        let (lo, hi) = self.scale_range;
        if lo < hi {
            ops.push(GeometricOp::Scale { factor: rng.random_range(lo..hi) });
        }
        ops
    }
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub image: RgbImage,
    pub boxes: Vec<AnnotatedBox>,
    pub ops: Vec<String>,
}

pub fn augment_geometric(
    img: &RgbImage,
    boxes: &[AnnotatedBox],
    params: &GeometricParams,
    seed: u64,
) -> Result<Augmented, AugmentError> {
    let ops = params.sample_ops(&mut ChaCha8Rng::seed_from_u64(seed));
    let (image, boxes) = apply_geometric(img, boxes, &ops)?;
    let ops = ops.iter().map(|o| serde_json::to_string(o).expect("op serializes")).collect();
    Ok(Augmented { image, boxes, ops })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum PhotometricOp {
    /// Hue rotation in degrees.
    Hue { degrees: f64 },
    Saturation { factor: f64 },
    /// Additive shift in `[−1, 1]` of full scale.
    Brightness { delta: f64 },
    /// Scale around mid-gray.
    Contrast { factor: f64 },
    /// Gaussian noise with standard deviation in 8-bit units.
    Noise { sigma: f64, seed: u64 },
}

fn rgb_to_hsv(p: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = p;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / d).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / d + 2.0)
    } else {
        60.0 * ((r - g) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn apply_photometric(img: &RgbImage, ops: &[PhotometricOp]) -> RgbImage {
    let mut out = img.clone();
    for &op in ops {
        match op {
            PhotometricOp::Hue { degrees } => map_hsv(&mut out, |[h, s, v]| [h + degrees, s, v]),
            PhotometricOp::Saturation { factor } => map_hsv(&mut out, |[h, s, v]| [h, (s * factor).clamp(0.0, 1.0), v]),
            PhotometricOp::Brightness { delta } => map_channels(&mut out, |c| c + delta),
            PhotometricOp::Contrast { factor } => map_channels(&mut out, |c| (c - 0.5) * factor + 0.5),
            PhotometricOp::Noise { sigma, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
                for p in out.pixels_mut() {
                    for c in p.0.iter_mut() {
                        *c = (*c as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
        }
    }
    out
}

fn map_channels(img: &mut RgbImage, f: impl Fn(f64) -> f64) {
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = to_u8(f(*c as f64 / 255.0));
        }
    }
}

fn map_hsv(img: &mut RgbImage, f: impl Fn([f64; 3]) -> [f64; 3]) {
    for p in img.pixels_mut() {
        let rgb = p.0.map(|c| c as f64 / 255.0);
        p.0 = hsv_to_rgb(f(rgb_to_hsv(rgb))).map(to_u8);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhotometricParams {
    pub hue_degrees: f64,
    pub saturation: (f64, f64),
    pub brightness: f64,
    pub contrast: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for PhotometricParams {
    fn default() -> Self {
        PhotometricParams { hue_degrees: 10.0, saturation: (0.7, 1.3), brightness: 0.1, contrast: (0.8, 1.2), noise_sigma: 4.0 }
    }
}

impl PhotometricParams {
    pub fn sample_ops<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PhotometricOp> {
        let sym = |rng: &mut R, a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
        let range = |rng: &mut R, (lo, hi): (f64, f64)| if lo < hi { rng.random_range(lo..=hi) } else { lo };
        vec![
            PhotometricOp::Hue { degrees: sym(rng, self.hue_degrees) },
            PhotometricOp::Saturation { factor: range(rng, self.saturation) },
            PhotometricOp::Brightness { delta: sym(rng, self.brightness) },
            PhotometricOp::Contrast { factor: range(rng, self.contrast) },
            PhotometricOp::Noise { sigma: self.noise_sigma, seed: rng.random() },
        ]
    }
}

pub fn augment_photometric(img: &RgbImage, boxes: &[AnnotatedBox], params: &PhotometricParams, seed: u64) -> Augmented {
    let ops = params.sample_ops(&mut ChaCha8Rng::seed_from_u64(seed));
    Augmented {
        image: apply_photometric(img, &ops),
        boxes: boxes.to_vec(),
        ops: ops.iter().map(|o| serde_json::to_string(o).expect("op serializes")).collect(),
    }
}
