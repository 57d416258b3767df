//! Directory-manifest slides: `manifest.json` plus lossless RGB tile files.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use image::{GenericImageView, RgbImage};
use serde::{Deserialize, Serialize};

use super::{SlideReader, WsiError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub x: u32,
    pub y: u32,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slide_id: Option<String>,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpp: Option<f64>,
    pub tile_index: Vec<ManifestEntry>,
}

pub(super) struct ManifestSlide {
    manifest: SlideManifest,
    root: PathBuf,
    // tile sizes resolved lazily from file headers when the manifest omits them
    sizes: Vec<OnceLock<Result<(u32, u32), String>>>,
}

impl ManifestSlide {
    pub(super) fn open(path: &Path) -> Result<Self, WsiError> {
        let text = std::fs::read_to_string(path).map_err(|e| WsiError::ReadFailure(e.to_string()))?;
        let manifest: SlideManifest =
            serde_json::from_str(&text).map_err(|e| WsiError::CorruptHeader(format!("{}: {e}", path.display())))?;
        if manifest.width_px == 0 || manifest.height_px == 0 {
            return Err(WsiError::CorruptHeader("manifest declares a zero dimension".into()));
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let sizes = manifest.tile_index.iter().map(|_| OnceLock::new()).collect();
        Ok(ManifestSlide { manifest, root, sizes })
    }

    pub(super) fn slide_id(&self) -> Option<&str> {
        self.manifest.slide_id.as_deref()
    }

    pub(super) fn mpp(&self) -> Option<f64> {
        self.manifest.mpp
    }

    fn entry_size(&self, i: usize) -> Result<(u32, u32), WsiError> {
        let e = &self.manifest.tile_index[i];
        if let (Some(w), Some(h)) = (e.width, e.height) {
            return Ok((w, h));
        }
        self.sizes[i]
            .get_or_init(|| image::image_dimensions(self.root.join(&e.file)).map_err(|err| format!("{}: {err}", e.file)))
            .clone()
            .map_err(WsiError::ReadFailure)
    }
}

impl SlideReader for ManifestSlide {
    fn dimensions(&self) -> (u32, u32) {
        (self.manifest.width_px, self.manifest.height_px)
    }

    /// Areas not covered by any tile read as white.
    fn read_region_unchecked(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage, WsiError> {
        let mut out = RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
        let (rx1, ry1) = (x + w, y + h);
        for (i, e) in self.manifest.tile_index.iter().enumerate() {
            let (tw, th) = self.entry_size(i)?;
            let (ix0, iy0) = (x.max(e.x), y.max(e.y));
            let (ix1, iy1) = (rx1.min(e.x + tw), ry1.min(e.y + th));
            if ix0 >= ix1 || iy0 >= iy1 {
                continue;
            }
            let img = image::open(self.root.join(&e.file))
                .map_err(|err| WsiError::ReadFailure(format!("{}: {err}", e.file)))?;
            if img.dimensions() != (tw, th) {
                return Err(WsiError::ReadFailure(format!(
                    "{}: manifest says {tw}x{th}, file is {:?}",
                    e.file,
                    img.dimensions()
                )));
            }
            let img = img.to_rgb8();
            for py in iy0..iy1 {
                for px in ix0..ix1 {
                    out.put_pixel(px - x, py - y, *img.get_pixel(px - e.x, py - e.y));
                }
            }
        }
        Ok(out)
    }
}

/// Write a slide as a manifest directory, cutting the source into
/// `tile_size` PNG tiles. Returns the manifest that was written.
pub fn write_manifest_slide(
    dir: &Path,
    slide_id: &str,
    source: &dyn SlideReader,
    tile_size: u32,
) -> Result<SlideManifest, WsiError> {
    let io = |e: std::io::Error| WsiError::ReadFailure(e.to_string());
    std::fs::create_dir_all(dir.join("tiles")).map_err(io)?;
    let (width, height) = source.dimensions();
    let mut tile_index = Vec::new();
    for y in (0..height).step_by(tile_size as usize) {
        for x in (0..width).step_by(tile_size as usize) {
            let (tw, th) = (tile_size.min(width - x), tile_size.min(height - y));
            let img = source.read_region_unchecked(x, y, tw, th)?;
            let file = format!("tiles/{x}_{y}.png");
            img.save(dir.join(&file)).map_err(|e| WsiError::ReadFailure(e.to_string()))?;
            tile_index.push(ManifestEntry { x, y, file, width: Some(tw), height: Some(th) });
        }
    }
    let manifest = SlideManifest {
        slide_id: Some(slide_id.to_string()),
        width_px: width,
        height_px: height,
        mpp: None,
        tile_index,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json).map_err(io)?;
    Ok(manifest)
}
