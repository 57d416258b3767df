//! YOLO text labels: one `class_id cx cy w h [confidence]` line per box,
//! coordinates normalized to the tile.
//!
//! A trailing confidence marks the box as model output; lines without one
//! are human annotations. Values are written in shortest round-trip form,
//! so write → parse is exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{AnnotatedBox, AnnotationError, AnnotationRecord, BoxSource, TileRef};
use crate::geometry::BBox;
use crate::taxonomy::CellClass;

pub fn parse_yolo(text: &str, tile: TileRef) -> Result<AnnotationRecord, AnnotationError> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let at = format!("line {}", i + 1);
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(AnnotationError::at(at, format!("expected 5 or 6 fields, found {}", fields.len())));
        }
        let id: u32 = fields[0].parse().map_err(|_| AnnotationError::at(&at, format!("bad class id `{}`", fields[0])))?;
        let cls = CellClass::from_id(id).ok_or_else(|| AnnotationError::at(&at, format!("unknown class id {id}")))?;
        let mut nums = [0.0f64; 5];
        for (slot, field) in nums.iter_mut().zip(&fields[1..]) {
            *slot = field.parse().map_err(|_| AnnotationError::at(&at, format!("bad number `{field}`")))?;
        }
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3]);
        if !bbox.is_valid() {
            return Err(AnnotationError::at(at, "box outside the unit tile or empty"));
        }
        let ann = if fields.len() == 6 {
            let c = nums[4];
            if !(0.0..=1.0).contains(&c) {
                return Err(AnnotationError::at(at, format!("confidence {c} outside [0, 1]")));
            }
            AnnotatedBox { bbox, cls, source: BoxSource::Model, confidence: Some(c) }
        } else {
            AnnotatedBox::human(bbox, cls)
        };
        boxes.push(ann);
    }
    Ok(AnnotationRecord::new(tile, boxes))
}

pub fn write_yolo(record: &AnnotationRecord) -> String {
    let mut out = String::new();
    for b in &record.boxes {
        let BBox { cx, cy, w, h } = b.bbox;
        write!(out, "{} {cx} {cy} {w} {h}", b.cls.id()).unwrap();
        if let Some(c) = b.confidence {
            write!(out, " {c}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_yolo_file(path: &Path, tile: TileRef) -> Result<AnnotationRecord, AnnotationError> {
    let text = std::fs::read_to_string(path)?;
    parse_yolo(&text, tile).map_err(|e| match e {
        AnnotationError::Parse { location, message } => {
            AnnotationError::Parse { location: format!("{}:{location}", path.display()), message }
        }
        other => other,
    })
}
