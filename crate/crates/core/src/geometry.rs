//! Axis-aligned boxes in normalized tile coordinates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Center/size box with all coordinates normalized to the tile (`[0, 1]`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner form `(x0, y0, x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Rect::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        (self.x1 - self.x0).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y1 - self.y0).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Half-open containment, so adjacent rects never both claim a point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersect(&self, other: &Rect) -> Rect {
        Rect::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn from_rect(r: Rect) -> Self {
        BBox {
            cx: (r.x0 + r.x1) / 2.0,
            cy: (r.y0 + r.y1) / 2.0,
            w: r.x1 - r.x0,
            h: r.y1 - r.y0,
        }
    }

    pub fn rect(&self) -> Rect {
        Rect::new(
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        let finite = self.cx.is_finite() && self.cy.is_finite() && self.w.is_finite() && self.h.is_finite();
        finite
            && (0.0..=1.0).contains(&self.cx)
            && (0.0..=1.0).contains(&self.cy)
            && self.w > 0.0
            && self.w <= 1.0
            && self.h > 0.0
            && self.h <= 1.0
    }

    /// Whole box within the unit tile, up to rounding.
    pub fn is_inside_unit(&self) -> bool {
        const EPS: f64 = 1e-9;
        let r = self.rect();
        self.is_valid() && r.x0 >= -EPS && r.y0 >= -EPS && r.x1 <= 1.0 + EPS && r.y1 <= 1.0 + EPS
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.rect().intersect(&other.rect()).area()
    }

    /// Clip to `bounds`; `None` when nothing of positive area remains.
    pub fn clip_to(&self, bounds: &Rect) -> Option<BBox> {
        let r = self.rect().intersect(bounds);
        (r.width() > 0.0 && r.height() > 0.0).then(|| BBox::from_rect(r))
    }

    /// Deterministic ordering used to break confidence ties: smaller area
    /// first, then lexicographic `(cx, cy, w, h)`.
    pub fn tie_break(&self, other: &BBox) -> Ordering {
        self.area()
            .total_cmp(&other.area())
            .then(self.cx.total_cmp(&other.cx))
            .then(self.cy.total_cmp(&other.cy))
            .then(self.w.total_cmp(&other.w))
            .then(self.h.total_cmp(&other.h))
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Distance-IoU: IoU minus the squared center distance over the squared
/// diagonal of the smallest enclosing box. Lies in `(-1, 1]`.
pub fn diou(a: &BBox, b: &BBox) -> f64 {
    let ra = a.rect();
    let rb = b.rect();
    let enclose_w = ra.x1.max(rb.x1) - ra.x0.min(rb.x0);
    let enclose_h = ra.y1.max(rb.y1) - ra.y0.min(rb.y0);
    let diag2 = enclose_w * enclose_w + enclose_h * enclose_h;
    let rho2 = (a.cx - b.cx).powi(2) + (a.cy - b.cy).powi(2);
    let penalty = if diag2 > 0.0 { rho2 / diag2 } else { 0.0 };
    iou(a, b) - penalty
}
