//! Deterministic stand-ins for the trained networks.
//!
//! They read the palette-coded cells painted by
//! [`crate::wsi::synthetic`] slides, so every downstream stage can be tested
//! against the planted ground truth.

use image::RgbImage;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BackendError, BackendInfo, DetectorBackend, RawDetection, TileClassifier};
use crate::reference::HistogramSampler;
use crate::taxonomy::CellClass;
use crate::wsi::synthetic::class_from_color;
use crate::wsi::Tile;

/// Connected region of one palette colour, pixel bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaletteComponent {
    pub class: CellClass,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
    pub area: u32,
}

impl PaletteComponent {
    pub fn touches_border(&self, w: u32, h: u32) -> bool {
        self.x0 == 0 || self.y0 == 0 || self.x1 + 1 == w || self.y1 + 1 == h
    }
}

/// 4-connected components of palette-coloured pixels, in scan order of
/// their first pixel.
pub fn palette_components(img: &RgbImage, min_area: u32) -> Vec<PaletteComponent> {
    let (w, h) = img.dimensions();
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if seen[idx] {
                continue;
            }
            seen[idx] = true;
            let Some(class) = class_from_color(img.get_pixel(x, y)) else { continue };
            let color = *img.get_pixel(x, y);
            let mut comp = PaletteComponent { class, x0: x, y0: y, x1: x, y1: y, area: 0 };
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                comp.area += 1;
                comp.x0 = comp.x0.min(cx);
                comp.x1 = comp.x1.max(cx);
                comp.y0 = comp.y0.min(cy);
                comp.y1 = comp.y1.max(cy);
                let neighbours = [
                    (cx.wrapping_sub(1), cy),
                    (cx + 1, cy),
                    (cx, cy.wrapping_sub(1)),
                    (cx, cy + 1),
                ];
                for (nx, ny) in neighbours {
                    if nx >= w || ny >= h {
                        continue;
                    }
                    let n = (ny * w + nx) as usize;
                    if !seen[n] && *img.get_pixel(nx, ny) == color {
                        seen[n] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            if comp.area >= min_area {
                out.push(comp);
            }
        }
    }
    out
}

/// Scores a tile by how many cell-like objects it holds:
/// `p = min(1, objects / saturation)`.
#[derive(Debug, Clone)]
pub struct ObjectDensityClassifier {
    pub saturation: f64,
    pub min_area: u32,
}

impl Default for ObjectDensityClassifier {
    fn default() -> Self {
        ObjectDensityClassifier { saturation: 15.0, min_area: 20 }
    }
}

impl TileClassifier for ObjectDensityClassifier {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("synthetic-density", format!("sat{}-min{}", self.saturation, self.min_area))
    }

    fn score(&self, tile: &Tile) -> Result<f64, BackendError> {
        let n = palette_components(&tile.pixels, self.min_area).len() as f64;
        Ok((n / self.saturation).min(1.0))
    }
}

/// Gives every tile the same score; useful to stream a slide ungated.
#[derive(Debug, Clone, Copy)]
pub struct ConstantClassifier {
    pub p: f64,
}

impl TileClassifier for ConstantClassifier {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("synthetic-constant", format!("p{}", self.p))
    }

    fn score(&self, _tile: &Tile) -> Result<f64, BackendError> {
        Ok(self.p)
    }
}

/// Detects palette-coded cells. Objects fully inside the tile get
/// confidence 0.95, objects cut by the tile border 0.6. With `duplicates`
/// every object also yields a slightly shifted lower-confidence box, the
/// kind of redundancy NMS has to remove.
#[derive(Debug, Clone)]
pub struct PaletteDetector {
    pub min_area: u32,
    pub duplicates: bool,
}

impl Default for PaletteDetector {
    fn default() -> Self {
        PaletteDetector { min_area: 20, duplicates: false }
    }
}

impl DetectorBackend for PaletteDetector {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("synthetic-palette", if self.duplicates { "dup" } else { "plain" })
    }

    fn detect(&self, tile: &Tile) -> Result<Vec<RawDetection>, BackendError> {
        let (w, h) = tile.pixels.dimensions();
        let (fw, fh) = (w as f64, h as f64);
        let mut out = Vec::new();
        for c in palette_components(&tile.pixels, self.min_area) {
            let bw = (c.x1 + 1 - c.x0) as f64 / fw;
            let bh = (c.y1 + 1 - c.y0) as f64 / fh;
            let cx = (c.x0 as f64 + c.x1 as f64 + 1.0) / 2.0 / fw;
            let cy = (c.y0 as f64 + c.y1 as f64 + 1.0) / 2.0 / fh;
            let confidence = if c.touches_border(w, h) { 0.6 } else { 0.95 };
            out.push(RawDetection { cx, cy, w: bw, h: bh, class_id: c.class.id() as u32, confidence });
            if self.duplicates {
                let shift = 0.1 * bw;
                let dcx = (cx + shift).min(1.0);
                out.push(RawDetection { cx: dcx, cy, w: bw, h: bh, class_id: c.class.id() as u32, confidence: confidence * 0.8 });
            }
        }
        Ok(out)
    }
}

/// Ignores pixels and draws an i.i.d. per-tile histogram from a fixed class
/// distribution. Boxes sit on a 5x5 lattice so they never overlap; output is
/// a pure function of `(seed, slide_id, coord)`.
#[derive(Debug, Clone)]
pub struct SamplingDetector {
    pub sampler: HistogramSampler,
    pub seed: u64,
}

impl SamplingDetector {
    pub const SLOTS: usize = 25;

    pub fn new(sampler: HistogramSampler, seed: u64) -> Self {
        SamplingDetector { sampler, seed }
    }

    fn rng_for(&self, tile: &Tile) -> ChaCha8Rng {
        let mut key = self.seed ^ 0xD1B5_4A32_D192_ED03;
        for b in tile.slide_id.bytes() {
            key = (key ^ b as u64).wrapping_mul(0x0100_0000_01B3);
        }
        key ^= ((tile.coord.row as u64) << 32) | tile.coord.col as u64;
        ChaCha8Rng::seed_from_u64(key)
    }
}

impl DetectorBackend for SamplingDetector {
    fn info(&self) -> BackendInfo {
        BackendInfo::new("synthetic-sampling", format!("seed{}", self.seed))
    }

    fn detect(&self, tile: &Tile) -> Result<Vec<RawDetection>, BackendError> {
        let mut rng = self.rng_for(tile);
        let classes = self.sampler.sample_classes(&mut rng);
        let n = classes.len().min(Self::SLOTS);
        let slots = sample(&mut rng, Self::SLOTS, n);
        Ok(classes
            .into_iter()
            .zip(slots.iter())
            .map(|(class, slot)| {
                let (sx, sy) = ((slot % 5) as f64, (slot / 5) as f64);
                RawDetection {
                    cx: (sx + 0.5) / 5.0,
                    cy: (sy + 0.5) / 5.0,
                    w: 0.12,
                    h: 0.12,
                    class_id: class.id() as u32,
                    confidence: rng.random_range(0.5..1.0),
                }
            })
            .collect())
    }
}
