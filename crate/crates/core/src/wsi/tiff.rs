//! Baseline tiled (or stripped) 8-bit RGB TIFF, level 0 only.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use ::tiff::decoder::{Decoder, DecodingResult};
use ::tiff::ColorType;
use image::RgbImage;

use super::{SlideReader, WsiError};

pub(super) struct TiffSlide {
    decoder: Mutex<Decoder<BufReader<File>>>,
    width: u32,
    height: u32,
    chunk_w: u32,
    chunk_h: u32,
}

fn corrupt(e: impl std::fmt::Display) -> WsiError {
    WsiError::CorruptHeader(e.to_string())
}

impl TiffSlide {
    pub(super) fn open(path: &Path) -> Result<Self, WsiError> {
        let file = File::open(path).map_err(|e| WsiError::NotFound(format!("{}: {e}", path.display())))?;
        let mut decoder = Decoder::new(BufReader::new(file)).map_err(corrupt)?;
        let (width, height) = decoder.dimensions().map_err(corrupt)?;
        match decoder.colortype().map_err(corrupt)? {
            ColorType::RGB(8) => {}
            other => return Err(WsiError::UnsupportedFormat(format!("TIFF color type {other:?}, expected 8-bit RGB"))),
        }
        let (chunk_w, chunk_h) = decoder.chunk_dimensions();
        if chunk_w == 0 || chunk_h == 0 {
            return Err(corrupt("zero chunk dimension"));
        }
        Ok(TiffSlide { decoder: Mutex::new(decoder), width, height, chunk_w, chunk_h })
    }
}

impl SlideReader for TiffSlide {
    fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn read_region_unchecked(&self, x: u32, y: u32, w: u32, h: u32) -> Result<RgbImage, WsiError> {
        let mut out = RgbImage::new(w, h);
        let across = self.width.div_ceil(self.chunk_w);
        let (cx0, cy0) = (x / self.chunk_w, y / self.chunk_h);
        let (cx1, cy1) = ((x + w - 1) / self.chunk_w, (y + h - 1) / self.chunk_h);
        let mut decoder = self.decoder.lock().map_err(|_| WsiError::ReadFailure("decoder poisoned".into()))?;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let index = cy * across + cx;
                let (dw, dh) = decoder.chunk_data_dimensions(index);
                let data = match decoder.read_chunk(index).map_err(|e| WsiError::ReadFailure(e.to_string()))? {
                    DecodingResult::U8(v) => v,
                    _ => return Err(WsiError::UnsupportedFormat("non-8-bit TIFF samples".into())),
                };
                let (ox, oy) = (cx * self.chunk_w, cy * self.chunk_h);
                let (ix0, iy0) = (x.max(ox), y.max(oy));
                let (ix1, iy1) = ((x + w).min(ox + dw), (y + h).min(oy + dh));
                for py in iy0..iy1 {
                    for px in ix0..ix1 {
                        let i = (((py - oy) * dw + (px - ox)) * 3) as usize;
                        let rgb = data
                            .get(i..i + 3)
                            .ok_or_else(|| WsiError::ReadFailure(format!("short chunk {index}")))?;
                        out.put_pixel(px - x, py - y, image::Rgb([rgb[0], rgb[1], rgb[2]]));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Write `source` as an uncompressed little-endian tiled RGB TIFF.
pub fn write_tiled_tiff(path: &Path, source: &dyn SlideReader, tile: u32) -> Result<(), WsiError> {
    if tile == 0 || tile % 16 != 0 {
        return Err(WsiError::InvalidGeometry(format!("TIFF tile size {tile} must be a positive multiple of 16")));
    }
    let io = |e: std::io::Error| WsiError::ReadFailure(e.to_string());
    let (width, height) = source.dimensions();
    let (across, down) = (width.div_ceil(tile), height.div_ceil(tile));
    let tile_bytes = tile * tile * 3;
    let count = across * down;

    let mut f = BufWriter::new(File::create(path).map_err(io)?);
    let data_start = 8u32;
    let bps_offset = data_start + count * tile_bytes;
    let offsets_offset = bps_offset + 6;
    let counts_offset = offsets_offset + 4 * count;
    let mut ifd_offset = counts_offset + 4 * count;
    ifd_offset += ifd_offset % 2;

    f.write_all(b"II").map_err(io)?;
    f.write_all(&42u16.to_le_bytes()).map_err(io)?;
    f.write_all(&ifd_offset.to_le_bytes()).map_err(io)?;

    // tiles are padded to full size at the right/bottom edges
    for ty in 0..down {
        for tx in 0..across {
            let (x, y) = (tx * tile, ty * tile);
            let (dw, dh) = (tile.min(width - x), tile.min(height - y));
            let img = source.read_region_unchecked(x, y, dw, dh)?;
            let mut buf = vec![0u8; tile_bytes as usize];
            for py in 0..dh {
                for px in 0..dw {
                    let i = ((py * tile + px) * 3) as usize;
                    buf[i..i + 3].copy_from_slice(&img.get_pixel(px, py).0);
                }
            }
            f.write_all(&buf).map_err(io)?;
        }
    }
    for _ in 0..3 {
        f.write_all(&8u16.to_le_bytes()).map_err(io)?;
    }
    for i in 0..count {
        f.write_all(&(data_start + i * tile_bytes).to_le_bytes()).map_err(io)?;
    }
    for _ in 0..count {
        f.write_all(&tile_bytes.to_le_bytes()).map_err(io)?;
    }
    if (counts_offset + 4 * count) % 2 == 1 {
        f.write_all(&[0]).map_err(io)?;
    }

    const SHORT: u16 = 3;
    const LONG: u16 = 4;
    let (offsets_entry, counts_entry) = if count == 1 {
        (data_start, tile_bytes)
    } else {
        (offsets_offset, counts_offset)
    };
    let entries: [(u16, u16, u32, u32); 11] = [
        (256, LONG, 1, width),
        (257, LONG, 1, height),
        (258, SHORT, 3, bps_offset),
        (259, SHORT, 1, 1),
        (262, SHORT, 1, 2),
        (277, SHORT, 1, 3),
        (284, SHORT, 1, 1),
        (322, LONG, 1, tile),
        (323, LONG, 1, tile),
        (324, LONG, count, offsets_entry),
        (325, LONG, count, counts_entry),
    ];
    f.write_all(&(entries.len() as u16).to_le_bytes()).map_err(io)?;
    for (tag, ty, n, value) in entries {
        f.write_all(&tag.to_le_bytes()).map_err(io)?;
        f.write_all(&ty.to_le_bytes()).map_err(io)?;
        f.write_all(&n.to_le_bytes()).map_err(io)?;
        if ty == SHORT && n == 1 {
            f.write_all(&(value as u16).to_le_bytes()).map_err(io)?;
            f.write_all(&[0, 0]).map_err(io)?;
        } else {
            f.write_all(&value.to_le_bytes()).map_err(io)?;
        }
    }
    f.write_all(&0u32.to_le_bytes()).map_err(io)?;
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wsi::{make_grid, open_slide, extract_tile, GridCoord, SyntheticSlide, SyntheticSlideParams};

    #[test]
    fn tiled_tiff_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slide.tiff");
        let synth = SyntheticSlide::new(SyntheticSlideParams { width: 1000, height: 700, ..Default::default() });
        write_tiled_tiff(&path, &synth, 256).unwrap();

        let h = open_slide(path.to_str().unwrap()).unwrap();
        assert_eq!((h.width_px, h.height_px), (1000, 700));
        assert_eq!(h.id, "slide");
        for (x, y, w, hh) in [(0, 0, 1000, 700), (255, 255, 2, 2), (700, 400, 300, 300), (13, 600, 500, 100)] {
            assert_eq!(h.read_region(x, y, w, hh).unwrap(), synth.read_region_unchecked(x, y, w, hh).unwrap());
        }
        let g = make_grid(&h, 2, 2, 256).unwrap();
        assert_eq!(extract_tile(&h, &g, GridCoord::new(1, 1)).unwrap().pixels.dimensions(), (256, 256));
    }

    #[test]
    fn single_tile_tiff() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.tif");
        let synth = SyntheticSlide::new(SyntheticSlideParams { width: 100, height: 80, ..Default::default() });
        write_tiled_tiff(&path, &synth, 128).unwrap();
        let h = open_slide(path.to_str().unwrap()).unwrap();
        assert_eq!(h.read_region(0, 0, 100, 80).unwrap(), synth.read_region_unchecked(0, 0, 100, 80).unwrap());
    }

    #[test]
    fn garbage_tiff_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tiff");
        std::fs::write(&path, b"II*\0garbage").unwrap();
        assert!(matches!(open_slide(path.to_str().unwrap()), Err(WsiError::CorruptHeader(_))));
    }
}
