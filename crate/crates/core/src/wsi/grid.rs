use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SlideHandle, WsiError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCoord {
    pub row: u32,
    pub col: u32,
}

impl GridCoord {
    pub fn new(row: u32, col: u32) -> Self {
        GridCoord { row, col }
    }
}

impl std::fmt::Display for GridCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "r{}c{}", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TileOrder {
    RowMajor,
    SeededShuffle { seed: u64 },
}

impl Default for TileOrder {
    fn default() -> Self {
        TileOrder::RowMajor
    }
}

/// `rows × cols` evenly partitioned cells over a slide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileGrid {
    pub rows: u32,
    pub cols: u32,
    pub tile_px: u32,
    pub slide_width: u32,
    pub slide_height: u32,
}

impl TileGrid {
    pub const DEFAULT_ROWS: u32 = 15;
    pub const DEFAULT_COLS: u32 = 20;
    pub const DEFAULT_TILE_PX: u32 = 512;

    pub fn cell_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn cell_width(&self) -> f64 {
        self.slide_width as f64 / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.slide_height as f64 / self.rows as f64
    }

    fn check(&self, coord: GridCoord) -> Result<(), WsiError> {
        if coord.row >= self.rows || coord.col >= self.cols {
            return Err(WsiError::OutOfGrid { row: coord.row, col: coord.col, rows: self.rows, cols: self.cols });
        }
        Ok(())
    }

    /// Center of a cell in level-0 pixels.
    pub fn cell_center(&self, coord: GridCoord) -> Result<(f64, f64), WsiError> {
        self.check(coord)?;
        Ok((
            (coord.col as f64 + 0.5) * self.cell_width(),
            (coord.row as f64 + 0.5) * self.cell_height(),
        ))
    }

    /// Top-left of the tile raster: cell center minus half a tile, clamped so
    /// the whole raster stays on the slide.
    pub fn tile_origin(&self, coord: GridCoord) -> Result<(u32, u32), WsiError> {
        let (cx, cy) = self.cell_center(coord)?;
        let half = self.tile_px as f64 / 2.0;
        let max_x = (self.slide_width - self.tile_px) as f64;
        let max_y = (self.slide_height - self.tile_px) as f64;
        let x = (cx - half).floor().clamp(0.0, max_x);
        let y = (cy - half).floor().clamp(0.0, max_y);
        Ok((x as u32, y as u32))
    }

    pub fn coords_row_major(&self) -> Vec<GridCoord> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| GridCoord::new(r, c)))
            .collect()
    }

    pub fn ordered_coords(&self, order: TileOrder) -> Vec<GridCoord> {
        let mut coords = self.coords_row_major();
        if let TileOrder::SeededShuffle { seed } = order {
            coords.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        }
        coords
    }
}

/// Build the sampling grid for a slide.
pub fn make_grid(slide: &SlideHandle, rows: u32, cols: u32, tile_px: u32) -> Result<TileGrid, WsiError> {
    if rows == 0 || cols == 0 || tile_px == 0 {
        return Err(WsiError::InvalidGeometry(format!("rows={rows} cols={cols} tile_px={tile_px}")));
    }
    if tile_px > slide.width_px || tile_px > slide.height_px {
        return Err(WsiError::InvalidGeometry(format!(
            "{tile_px}px tile does not fit a {}x{} slide",
            slide.width_px, slide.height_px
        )));
    }
    let grid = TileGrid { rows, cols, tile_px, slide_width: slide.width_px, slide_height: slide.height_px };
    if grid.cell_width() < tile_px as f64 || grid.cell_height() < tile_px as f64 {
        log::warn!(
            "grid cells ({:.0}x{:.0}px) are smaller than the {tile_px}px tile; neighbouring tiles will overlap",
            grid.cell_width(),
            grid.cell_height()
        );
    }
    Ok(grid)
}
