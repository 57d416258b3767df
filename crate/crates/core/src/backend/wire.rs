//! JSON wire contract for out-of-process inference servers.
//!
//! Request (both models): `{"tile_png_base64": "...", "tile_coord": [row, col]}`.
//! ROI response: `{"p_appropriate": 0.87}`.
//! Detector response: `{"detections": [{"cx":..,"cy":..,"w":..,"h":..,"class_id":..,"confidence":..}]}`.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::wsi::{GridCoord, Tile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRequest {
    pub tile_png_base64: String,
    pub tile_coord: [u32; 2],
}

impl TileRequest {
    pub fn from_tile(tile: &Tile) -> Self {
        TileRequest { tile_png_base64: encode_png_base64(&tile.pixels), tile_coord: [tile.coord.row, tile.coord.col] }
    }

    pub fn coord(&self) -> GridCoord {
        GridCoord::new(self.tile_coord[0], self.tile_coord[1])
    }

    pub fn decode_pixels(&self) -> Result<RgbImage, String> {
        decode_png_base64(&self.tile_png_base64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoiResponse {
    pub p_appropriate: f64,
}

/// One raw box as emitted by a detector, before class-id validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawDetection {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub class_id: u32,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<RawDetection>,
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("PNG encoding to memory");
    buf.into_inner()
}

pub fn encode_png_base64(img: &RgbImage) -> String {
    STANDARD.encode(encode_png(img))
}

pub fn decode_png_base64(s: &str) -> Result<RgbImage, String> {
    let bytes = STANDARD.decode(s).map_err(|e| e.to_string())?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_is_lossless() {
        let img = RgbImage::from_fn(17, 9, |x, y| image::Rgb([x as u8, y as u8, (x * y) as u8]));
        let tile = Tile { slide_id: "s".into(), coord: GridCoord::new(3, 4), origin_px: (0, 0), pixels: img.clone() };
        let req = TileRequest::from_tile(&tile);
        let json = serde_json::to_string(&req).unwrap();
        let back: TileRequest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.coord(), GridCoord::new(3, 4));
        assert_eq!(back.decode_pixels().unwrap(), img);
    }

    #[test]
    fn detector_response_shape() {
        let r: DetectResponse = serde_json::from_str(
            r#"{"detections":[{"cx":0.5,"cy":0.5,"w":0.1,"h":0.2,"class_id":4,"confidence":0.9}]}"#,
        )
        .unwrap();
        assert_eq!(r.detections[0].class_id, 4);
    }
}
