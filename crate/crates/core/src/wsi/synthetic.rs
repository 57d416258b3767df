//! Procedural slides for tests, demos and calibration.
//!
//! The slide is divided into square blocks; each block holds a small lattice
//! of slots and every slot independently holds at most one solid disk whose
//! colour encodes its [`CellClass`]. Disks never overlap or cross block
//! borders, so the planted cells are recoverable exactly from pixels. Coarser
//! patches are marked as suitable (light background, cells) or unsuitable
//! (smeared background, no cells).

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{SlideReader, WsiError};
use crate::reference::REFERENCE_CLASS_WEIGHTS;
use crate::taxonomy::CellClass;

pub const ROI_BACKGROUND: Rgb<u8> = Rgb([246, 240, 244]);
pub const SMEAR_BACKGROUND: Rgb<u8> = Rgb([228, 170, 185]);

/// Solid colour used to paint a planted cell of `class`.
pub fn class_color(class: CellClass) -> Rgb<u8> {
    Rgb([20 + 10 * class.id(), 60, 140])
}

pub fn class_from_color(px: &Rgb<u8>) -> Option<CellClass> {
    let [r, g, b] = px.0;
    if g != 60 || b != 140 || r < 20 || (r - 20) % 10 != 0 {
        return None;
    }
    CellClass::from_id(((r - 20) / 10) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedCell {
    pub class: CellClass,
    pub cx: i64,
    pub cy: i64,
    pub radius: i64,
}

/// Paint a filled disk, clipped to the image. `(cx, cy)` is relative to the
/// image origin.
pub fn draw_cell(img: &mut RgbImage, cx: i64, cy: i64, radius: i64, class: CellClass) {
    let color = class_color(class);
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in (cy - radius).max(0)..=(cy + radius).min(h - 1) {
        for x in (cx - radius).max(0)..=(cx + radius).min(w - 1) {
            let (dx, dy) = (x - cx, y - cy);
            if dx * dx + dy * dy <= radius * radius {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSlideParams {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub block_px: u32,
    pub slots_per_side: u32,
    /// Probability that a slot holds a cell.
    pub occupancy: f64,
    /// Fraction of patches with a suitable (cell-bearing) background.
    pub roi_fraction: f64,
    pub patch_px: u32,
    pub min_radius: u32,
    pub max_radius: u32,
    pub class_weights: Vec<f64>,
}

impl Default for SyntheticSlideParams {
    fn default() -> Self {
        SyntheticSlideParams {
            seed: 0,
            width: 10240,
            height: 7680,
            block_px: 256,
            slots_per_side: 4,
            // 4 blocks x 16 slots per 512px tile -> ~9.5 cells per tile
            occupancy: 9.5 / 64.0,
            roi_fraction: 0.2,
            patch_px: 512,
            min_radius: 9,
            max_radius: 20,
            class_weights: REFERENCE_CLASS_WEIGHTS.to_vec(),
        }
    }
}

impl SyntheticSlideParams {
    /// Parse `"<seed>?width=..&height=..&occupancy=..&roi=.."`.
    pub fn from_uri_body(body: &str) -> Result<Self, WsiError> {
        let bad = |m: String| WsiError::UnsupportedFormat(format!("synthetic slide URI: {m}"));
        let (seed, query) = body.split_once('?').unwrap_or((body, ""));
        let mut p = SyntheticSlideParams {
            seed: seed.trim_end_matches('/').parse().map_err(|_| bad(format!("bad seed `{seed}`")))?,
            ..Default::default()
        };
        for pair in query.split('&').filter(|s| !s.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| bad(format!("`{pair}`")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad value for {k}: `{v}`")));
            match k {
                "width" => p.width = num(v)? as u32,
                "height" => p.height = num(v)? as u32,
                "occupancy" => p.occupancy = num(v)?,
                "roi" => p.roi_fraction = num(v)?,
                "block" => p.block_px = num(v)? as u32,
                "patch" => p.patch_px = num(v)? as u32,
                _ => return Err(bad(format!("unknown key `{k}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), WsiError> {
        let slot = self.block_px / self.slots_per_side.max(1);
        let ok = self.width > 0
            && self.height > 0
            && self.slots_per_side > 0
            && self.patch_px >= self.block_px
            && self.patch_px % self.block_px == 0
            && self.min_radius >= 1
            && self.min_radius <= self.max_radius
            && 2 * self.max_radius < slot
            && (0.0..=1.0).contains(&self.occupancy)
            && (0.0..=1.0).contains(&self.roi_fraction)
            && self.class_weights.len() == CellClass::COUNT
            && self.class_weights.iter().any(|&w| w > 0.0);
        if ok {
            Ok(())
        } else {
            Err(WsiError::InvalidGeometry(format!("inconsistent synthetic slide parameters {self:?}")))
        }
    }
}

pub struct SyntheticSlide {
    params: SyntheticSlideParams,
    classes: WeightedIndex<f64>,
}

fn mix(seed: u64, a: u64, b: u64, salt: u64) -> u64 {
    // splitmix64 over a combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F) ^ salt;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SyntheticSlide {
    pub fn new(params: SyntheticSlideParams) -> Self {
        params.validate().expect("valid synthetic slide parameters");
        let classes = WeightedIndex::new(&params.class_weights).expect("positive class weights");
        SyntheticSlide { params, classes }
    }

    pub fn params(&self) -> &SyntheticSlideParams {
        &self.params
    }

    pub fn is_roi_patch(&self, px: u32, py: u32) -> bool {
        let u = (mix(self.params.seed, px as u64, py as u64, 0x5151) >> 11) as f64 / (1u64 << 53) as f64;
        u < self.params.roi_fraction
    }

    fn is_roi_at(&self, x: u32, y: u32) -> bool {
        self.is_roi_patch(x / self.params.patch_px, y / self.params.patch_px)
    }

    fn block_cells(&self, bx: u32, by: u32) -> Vec<PlantedCell> {
        let p = &self.params;
        let (x0, y0) = (bx * p.block_px, by * p.block_px);
        if !self.is_roi_at(x0, y0) {
            return Vec::new();
        }
        let slot = p.block_px / p.slots_per_side;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(p.seed, bx as u64, by as u64, 0xCE11));
        let mut cells = Vec::new();
        for sy in 0..p.slots_per_side {
            for sx in 0..p.slots_per_side {
                // draw every variate regardless of occupancy so slots stay independent
                let occupied = rng.random::<f64>() < p.occupancy;
                let class = CellClass::ALL[self.classes.sample(&mut rng)];
                let radius = rng.random_range(p.min_radius..=p.max_radius) as i64;
                let span = slot as i64 - 2 * radius - 2;
                let jx = rng.random_range(0..=span.max(0));
                let jy = rng.random_range(0..=span.max(0));
                if !occupied {
                    continue;
                }
                let cx = (x0 + sx * slot) as i64 + 1 + radius + jx;
                let cy = (y0 + sy * slot) as i64 + 1 + radius + jy;
                if cx + radius >= p.width as i64 || cy + radius >= p.height as i64 {
                    continue;
                }
                cells.push(PlantedCell { class, cx, cy, radius });
            }
        }
        cells
    }

    /// Cells whose disk intersects the region, in slide coordinates.
    pub fn planted_cells(&self, x: u32, y: u32, w: u32, h: u32) -> Vec<PlantedCell> {
        let b = self.params.block_px;
        let mut out = Vec::new();
        for by in y / b..=(y + h - 1) / b {
            for bx in x / b..=(x + w - 1) / b {
                out.extend(self.block_cells(bx, by).into_iter().filter(|c| {
                    c.cx + c.radius >= x as i64
                        && c.cx - c.radius < (x + w) as i64
                        && c.cy + c.radius >= y as i64
                        && c.cy - c.radius < (y + h) as i64
                }));
            }
        }
        out
    }
}

impl SlideReader for SyntheticSlide {
    fn dimensions(&self) -> (u32, u32) {
        (self.params.width, self.params.height)
    }

    fn read_region_unchecked(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage, WsiError> {
        let patch = self.params.patch_px;
        let mut img = RgbImage::new(w, h);
        for py in (y / patch)..=((y + h - 1) / patch) {
            for px in (x / patch)..=((x + w - 1) / patch) {
                let color = if self.is_roi_patch(px, py) { ROI_BACKGROUND } else { SMEAR_BACKGROUND };
                let (ix0, iy0) = ((px * patch).max(x) - x, (py * patch).max(y) - y);
                let (ix1, iy1) = (((px + 1) * patch).min(x + w) - x, ((py + 1) * patch).min(y + h) - y);
                for iy in iy0..iy1 {
                    for ix in ix0..ix1 {
                        img.put_pixel(ix, iy, color);
                    }
                }
            }
        }
        for c in self.planted_cells(x, y, w, h) {
            draw_cell(&mut img, c.cx - x as i64, c.cy - y as i64, c.radius, c.class);
        }
        Ok(img)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_round_trips() {
        for c in CellClass::ALL {
            assert_eq!(class_from_color(&class_color(c)), Some(c));
        }
        assert_eq!(class_from_color(&ROI_BACKGROUND), None);
        assert_eq!(class_from_color(&SMEAR_BACKGROUND), None);
    }

    #[test]
    fn regions_are_consistent_across_reads() {
        let s = SyntheticSlide::new(SyntheticSlideParams { seed: 11, width: 2048, height: 2048, ..Default::default() });
        let whole = s.read_region_unchecked(0, 0, 2048, 2048).unwrap();
        let part = s.read_region_unchecked(700, 300, 512, 512).unwrap();
        for (px, py, p) in part.enumerate_pixels() {
            assert_eq!(p, whole.get_pixel(700 + px, 300 + py));
        }
    }

    #[test]
    fn density_matches_target_in_roi() {
        let s = SyntheticSlide::new(SyntheticSlideParams { seed: 5, roi_fraction: 1.0, ..Default::default() });
        let cells = s.planted_cells(0, 0, 10240, 7680);
        let per_tile = cells.len() as f64 / 300.0;
        assert!((per_tile - 9.5).abs() < 0.5, "{per_tile}");
    }

    #[test]
    fn uri_parsing() {
        let p = SyntheticSlideParams::from_uri_body("42?width=2048&height=1024&roi=0.5").unwrap();
        assert_eq!((p.seed, p.width, p.height, p.roi_fraction), (42, 2048, 1024, 0.5));
        assert!(SyntheticSlideParams::from_uri_body("x").is_err());
        assert!(SyntheticSlideParams::from_uri_body("1?colour=red").is_err());
    }
}
