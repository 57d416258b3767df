//! Pascal-VOC XML annotations with absolute pixel corners.
//!
//! Corners are written with at most nine decimals (integers stay integers,
//! as labeling tools emit them), so a written file parses and re-writes to
//! the same text; normalized boxes survive to better than 1e-10.

use std::fmt::Write as _;

use super::{AnnotatedBox, AnnotationError, AnnotationRecord, BoxSource, TileRef};
use crate::geometry::{BBox, Rect};
use crate::taxonomy::CellClass;

pub fn parse_voc(text: &str, tile: TileRef) -> Result<AnnotationRecord, AnnotationError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| AnnotationError::at("document", e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "annotation" {
        return Err(AnnotationError::at("document", format!("root element is <{}>", root.tag_name().name())));
    }
    let size = child(root, "size").ok_or_else(|| AnnotationError::at("annotation", "missing <size>"))?;
    let width = number(size, "width", "size")?;
    let height = number(size, "height", "size")?;
    if width <= 0.0 || height <= 0.0 {
        return Err(AnnotationError::at("size", "non-positive image size"));
    }

    let mut boxes = Vec::new();
    for (i, obj) in root.children().filter(|n| n.has_tag_name("object")).enumerate() {
        let at = format!("object[{i}]");
        let name = child(obj, "name")
            .and_then(|n| n.text())
            .ok_or_else(|| AnnotationError::at(&at, "missing <name>"))?;
        let cls: CellClass = name.parse()?;
        let bnd = child(obj, "bndbox").ok_or_else(|| AnnotationError::at(&at, "missing <bndbox>"))?;
        let loc = format!("{at}/bndbox");
        let rect = Rect::new(
            number(bnd, "xmin", &loc)? / width,
            number(bnd, "ymin", &loc)? / height,
            number(bnd, "xmax", &loc)? / width,
            number(bnd, "ymax", &loc)? / height,
        );
        let bbox = BBox::from_rect(rect);
        if !bbox.is_valid() {
            return Err(AnnotationError::at(loc, "box outside the image or empty"));
        }
        let confidence = match child(obj, "confidence") {
            Some(_) => Some(number(obj, "confidence", &at)?),
            None => None,
        };
        let source = match child(obj, "source").and_then(|n| n.text()).map(str::trim) {
            None => {
                if confidence.is_some() {
                    BoxSource::Model
                } else {
                    BoxSource::Human
                }
            }
            Some("human") => BoxSource::Human,
            Some("model") => BoxSource::Model,
            Some("model-confirmed") => BoxSource::ModelConfirmed,
            Some(other) => return Err(AnnotationError::at(format!("{at}/source"), format!("unknown source `{other}`"))),
        };
        boxes.push(AnnotatedBox { bbox, cls, source, confidence });
    }
    Ok(AnnotationRecord::new(tile, boxes))
}

fn child<'a, 'i>(node: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn number(node: roxmltree::Node, name: &str, at: &str) -> Result<f64, AnnotationError> {
    let text = child(node, name)
        .and_then(|n| n.text())
        .ok_or_else(|| AnnotationError::at(at, format!("missing <{name}>")))?;
    text.trim()
        .parse()
        .map_err(|_| AnnotationError::at(format!("{at}/{name}"), format!("bad number `{}`", text.trim())))
}

fn pixels(v: f64) -> String {
    let s = format!("{v:.9}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write `record` for an image of `width × height` pixels.
pub fn write_voc(record: &AnnotationRecord, width: u32, height: u32) -> String {
    let filename = record.tile.file.clone().unwrap_or_else(|| format!("{}.png", record.tile.key()));
    let (w, h) = (width as f64, height as f64);
    let mut out = String::from("<annotation>\n");
    writeln!(out, "  <filename>{}</filename>", escape(&filename)).unwrap();
    writeln!(out, "  <size><width>{width}</width><height>{height}</height><depth>3</depth></size>").unwrap();
    for b in &record.boxes {
        let r = b.bbox.rect();
        out.push_str("  <object>\n");
        writeln!(out, "    <name>{}</name>", b.cls.name()).unwrap();
        writeln!(
            out,
            "    <bndbox><xmin>{}</xmin><ymin>{}</ymin><xmax>{}</xmax><ymax>{}</ymax></bndbox>",
            pixels(r.x0 * w),
            pixels(r.y0 * h),
            pixels(r.x1 * w),
            pixels(r.y1 * h)
        )
        .unwrap();
        let source = match b.source {
            BoxSource::Human => "human",
            BoxSource::Model => "model",
            BoxSource::ModelConfirmed => "model-confirmed",
        };
        writeln!(out, "    <source>{source}</source>").unwrap();
        if let Some(c) = b.confidence {
            writeln!(out, "    <confidence>{c}</confidence>").unwrap();
        }
        out.push_str("  </object>\n");
    }
    out.push_str("</annotation>\n");
    out
}
