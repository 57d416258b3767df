//! Whole-slide access: slide containers, the sampling grid and tile streams.
//!
//! A slide is anything implementing [`SlideReader`]; three containers ship
//! in-tree (directory manifest of PNG tiles, baseline tiled TIFF, and a
//! procedural synthetic slide). Tiles are always `tile_px × tile_px` RGB
//! rasters taken around grid-cell centers and clamped into the slide.

mod grid;
mod manifest;
pub mod synthetic;
mod tiff;

use std::path::Path;
use std::sync::Arc;

use image::RgbImage;

pub use grid::{make_grid, GridCoord, TileGrid, TileOrder};
pub use manifest::{write_manifest_slide, ManifestEntry, SlideManifest};
pub use synthetic::{SyntheticSlide, SyntheticSlideParams};
pub use tiff::write_tiled_tiff;

#[derive(Debug, thiserror::Error)]
pub enum WsiError {
    #[error("slide not found: {0}")]
    NotFound(String),
    #[error("unsupported slide format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt slide header: {0}")]
    CorruptHeader(String),
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("coordinate ({row}, {col}) outside {rows}x{cols} grid")]
    OutOfGrid { row: u32, col: u32, rows: u32, cols: u32 },
    #[error("region {x},{y} {w}x{h} outside {width}x{height} slide")]
    OutOfBounds { x: u32, y: u32, w: u32, h: u32, width: u32, height: u32 },
    #[error("failed to read slide data: {0}")]
    ReadFailure(String),
}

/// Random-access pixel source for level 0 of a slide.
pub trait SlideReader: Send + Sync {
    fn dimensions(&self) -> (u32, u32);

    /// Region fully inside the slide; callers check bounds first.
    fn read_region_unchecked(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage, WsiError>;
}

#[derive(Clone)]
pub struct SlideHandle {
    pub id: String,
    pub width_px: u32,
    pub height_px: u32,
    pub mpp: Option<f64>,
    pub source: String,
    reader: Arc<dyn SlideReader>,
}

impl std::fmt::Debug for SlideHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlideHandle")
            .field("id", &self.id)
            .field("width_px", &self.width_px)
            .field("height_px", &self.height_px)
            .field("mpp", &self.mpp)
            .field("source", &self.source)
            .finish()
    }
}

impl SlideHandle {
    pub fn from_reader(id: impl Into<String>, source: impl Into<String>, reader: Arc<dyn SlideReader>) -> Result<Self, WsiError> {
        let (width_px, height_px) = reader.dimensions();
        if width_px == 0 || height_px == 0 {
            return Err(WsiError::CorruptHeader(format!("zero dimension {width_px}x{height_px}")));
        }
        Ok(SlideHandle {
            id: id.into(),
            width_px,
            height_px,
            mpp: None,
            source: source.into(),
            reader,
        })
    }

    pub fn with_mpp(mut self, mpp: Option<f64>) -> Self {
        self.mpp = mpp;
        self
    }

    pub fn read_region(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage, WsiError> {
        let inside = w > 0
            && h > 0
            && x.checked_add(w).is_some_and(|r| r <= self.width_px)
            && y.checked_add(h).is_some_and(|b| b <= self.height_px);
        if !inside {
            return Err(WsiError::OutOfBounds { x, y, w, h, width: self.width_px, height: self.height_px });
        }
        let img = self.reader.read_region_unchecked(x, y, w, h)?;
        if img.dimensions() != (w, h) {
            return Err(WsiError::ReadFailure(format!(
                "reader returned {:?} for a {w}x{h} request",
                img.dimensions()
            )));
        }
        Ok(img)
    }
}

/// Open a slide from a path or URI.
///
/// Accepted sources: a directory containing `manifest.json`, a manifest file
/// itself, a `.tif`/`.tiff` file, or `synthetic://<seed>?key=value&...`.
pub fn open_slide(source: &str) -> Result<SlideHandle, WsiError> {
    if let Some(rest) = source.strip_prefix("synthetic://") {
        let params = SyntheticSlideParams::from_uri_body(rest)?;
        let slide = SyntheticSlide::new(params);
        let id = format!("synthetic-{}", slide.params().seed);
        return SlideHandle::from_reader(id, source, Arc::new(slide));
    }

    let path = Path::new(source);
    if !path.exists() {
        return Err(WsiError::NotFound(source.to_string()));
    }
    let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    let ext = manifest_path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();

    match ext.as_str() {
        "json" => {
            if !manifest_path.exists() {
                return Err(WsiError::NotFound(manifest_path.display().to_string()));
            }
            let reader = manifest::ManifestSlide::open(&manifest_path)?;
            let id = reader.slide_id().map(str::to_string).unwrap_or_else(|| stem_id(path));
            let mpp = reader.mpp();
            Ok(SlideHandle::from_reader(id, source, Arc::new(reader))?.with_mpp(mpp))
        }
        "tif" | "tiff" => {
            let reader = tiff::TiffSlide::open(&manifest_path)?;
            SlideHandle::from_reader(stem_id(path), source, Arc::new(reader))
        }
        other => Err(WsiError::UnsupportedFormat(format!("`{other}` ({source})"))),
    }
}

fn stem_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty() && *s != "manifest")
        .map(str::to_string)
        .or_else(|| path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()).map(str::to_string))
        .unwrap_or_else(|| "slide".to_string())
}

/// A tile raster tied to its grid cell.
#[derive(Debug, Clone)]
pub struct Tile {
    pub slide_id: String,
    pub coord: GridCoord,
    pub origin_px: (u32, u32),
    pub pixels: RgbImage,
}

pub fn extract_tile(slide: &SlideHandle, grid: &TileGrid, coord: GridCoord) -> Result<Tile, WsiError> {
    let (x, y) = grid.tile_origin(coord)?;
    let pixels = slide.read_region(x, y, grid.tile_px, grid.tile_px)?;
    Ok(Tile { slide_id: slide.id.clone(), coord, origin_px: (x, y), pixels })
}

/// Tiles in the declared order. Each item carries its own read result so a
/// failing tile does not end the stream.
pub fn iterate_tiles<'a>(
    slide: &'a SlideHandle,
    grid: &'a TileGrid,
    order: TileOrder,
) -> impl Iterator<Item = (GridCoord, Result<Tile, WsiError>)> + 'a {
    grid.ordered_coords(order).into_iter().map(move |c| (c, extract_tile(slide, grid, c)))
}

/// Reads `chunk` tiles at a time concurrently and yields them in order.
pub struct TileStream<'a> {
    slide: &'a SlideHandle,
    grid: &'a TileGrid,
    coords: Vec<GridCoord>,
    next: usize,
    chunk: usize,
}

impl<'a> TileStream<'a> {
    pub fn new(slide: &'a SlideHandle, grid: &'a TileGrid, order: TileOrder, chunk: usize) -> Self {
        TileStream { slide, grid, coords: grid.ordered_coords(order), next: 0, chunk: chunk.max(1) }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Next batch of up to `chunk` tiles, in stream order.
    pub fn next_batch(&mut self) -> Option<Vec<(GridCoord, Result<Tile, WsiError>)>> {
        if self.next >= self.coords.len() {
            return None;
        }
        let end = (self.next + self.chunk).min(self.coords.len());
        let batch = &self.coords[self.next..end];
        self.next = end;
        Some(crate::par::map(batch, |&c| (c, extract_tile(self.slide, self.grid, c))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(w: u32, h: u32) -> SlideHandle {
        open_slide(&format!("synthetic://3?width={w}&height={h}")).unwrap()
    }

    #[test]
    fn missing_file_is_not_found() {
        assert!(matches!(open_slide("/nonexistent/slide.tiff"), Err(WsiError::NotFound(_))));
    }

    #[test]
    fn unknown_extension_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("slide.svs");
        std::fs::write(&p, b"nope").unwrap();
        assert!(matches!(open_slide(p.to_str().unwrap()), Err(WsiError::UnsupportedFormat(_))));
    }

    #[test]
    fn reads_outside_bounds_fail() {
        let s = synthetic(1024, 768);
        assert!(s.read_region(0, 0, 1024, 768).is_ok());
        assert!(matches!(s.read_region(600, 0, 512, 512), Err(WsiError::OutOfBounds { .. })));
        assert!(matches!(s.read_region(0, 0, 0, 10), Err(WsiError::OutOfBounds { .. })));
    }

    #[test]
    fn corner_tiles_clamp_to_bounds() {
        let s = synthetic(10240, 7680);
        let g = make_grid(&s, 15, 20, 512).unwrap();
        let t = extract_tile(&s, &g, GridCoord::new(0, 0)).unwrap();
        assert_eq!(t.origin_px, (0, 0));
        let t = extract_tile(&s, &g, GridCoord::new(14, 19)).unwrap();
        assert_eq!(t.origin_px, (9728, 7168));
        assert_eq!(t.pixels.dimensions(), (512, 512));
        assert!(matches!(
            extract_tile(&s, &g, GridCoord::new(15, 0)),
            Err(WsiError::OutOfGrid { .. })
        ));
    }

    #[test]
    fn stream_emits_every_cell_once_in_order() {
        let s = synthetic(2048, 1536);
        let g = make_grid(&s, 3, 4, 256).unwrap();
        let order = TileOrder::SeededShuffle { seed: 7 };
        let mut stream = TileStream::new(&s, &g, order, 5);
        let mut seen = Vec::new();
        while let Some(batch) = stream.next_batch() {
            for (c, t) in batch {
                assert_eq!(t.unwrap().coord, c);
                seen.push(c);
            }
        }
        assert_eq!(seen, g.ordered_coords(order));
        let sequential: Vec<_> = iterate_tiles(&s, &g, order).map(|(c, _)| c).collect();
        assert_eq!(seen, sequential);
    }
}
