use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::taxonomy::{CellClass, ClassCounts, UnknownClassName};
use crate::wsi::GridCoord;

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("{location}: {message}")]
    Parse { location: String, message: String },
    #[error(transparent)]
    UnknownClassName(#[from] UnknownClassName),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AnnotationError {
    pub(crate) fn at(location: impl Into<String>, message: impl Into<String>) -> Self {
        AnnotationError::Parse { location: location.into(), message: message.into() }
    }
}

/// Where a tile came from: a grid cell on a slide, a standalone file, or both.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TileRef {
    pub slide_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<GridCoord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

impl TileRef {
    pub fn grid(slide_id: impl Into<String>, coord: GridCoord) -> Self {
        TileRef { slide_id: slide_id.into(), coord: Some(coord), file: None }
    }

    pub fn file(slide_id: impl Into<String>, file: impl Into<String>) -> Self {
        TileRef { slide_id: slide_id.into(), coord: None, file: Some(file.into()) }
    }

    /// Filesystem-safe identifier, stable for a given reference.
    pub fn key(&self) -> String {
        let mut key = sanitize(&self.slide_id);
        if let Some(c) = self.coord {
            key.push_str(&format!("_r{}c{}", c.row, c.col));
        }
        if let Some(f) = &self.file {
            let stem = std::path::Path::new(f).file_stem().and_then(|s| s.to_str()).unwrap_or(f);
            key.push('_');
            key.push_str(&sanitize(stem));
        }
        key
    }
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

impl fmt::Display for TileRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.slide_id)?;
        if let Some(c) = self.coord {
            write!(f, "@{c}")?;
        }
        if let Some(file) = &self.file {
            write!(f, ":{file}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxSource {
    Human,
    Model,
    ModelConfirmed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub bbox: BBox,
    pub cls: CellClass,
    pub source: BoxSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl AnnotatedBox {
    pub fn human(bbox: BBox, cls: CellClass) -> Self {
        AnnotatedBox { bbox, cls, source: BoxSource::Human, confidence: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub tile: TileRef,
    pub boxes: Vec<AnnotatedBox>,
}

impl AnnotationRecord {
    pub fn new(tile: TileRef, boxes: Vec<AnnotatedBox>) -> Self {
        AnnotationRecord { tile, boxes }
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut counts = ClassCounts::default();
        for b in &self.boxes {
            counts.add(b.cls, 1);
        }
        counts
    }

    pub fn is_valid(&self) -> bool {
        self.boxes.iter().all(|b| b.bbox.is_valid() && b.confidence.is_none_or(|c| (0.0..=1.0).contains(&c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_filesystem_safe_and_distinct() {
        let a = TileRef::grid("slide 1", GridCoord::new(3, 4));
        let b = TileRef::file("slide 1", "images/t/3.png");
        assert_eq!(a.key(), "slide_1_r3c4");
        assert_eq!(b.key(), "slide_1_3");
        assert_ne!(a.key(), b.key());
    }

    #[test]
    fn source_serializes_kebab() {
        assert_eq!(serde_json::to_string(&BoxSource::ModelConfirmed).unwrap(), "\"model-confirmed\"");
    }
}
