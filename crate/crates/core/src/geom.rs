//! Boxes and region<->frame coordinate mappings.

use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left corner plus size, in pixels (continuous).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn cx(&self) -> f64 {
        self.x + self.w / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn x2(&self) -> f64 {
        self.x + self.w
    }

    pub fn y2(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// True when the box cannot anchor a crop (zero/negative area).
    pub fn is_degenerate(&self) -> bool {
        !(self.w > 0.0 && self.h > 0.0)
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        let dx = self.cx() - other.cx();
        let dy = self.cy() - other.cy();
        (dx * dx + dy * dy).sqrt()
    }
}

/// Affine map from region (crop) coordinates to frame coordinates, uniform
/// scale on both axes: `frame = origin + scale * region`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMapping {
    pub scale: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl RegionMapping {
    pub fn identity() -> Self {
        RegionMapping {
            scale: 1.0,
            origin_x: 0.0,
            origin_y: 0.0,
        }
    }

    pub fn translation(ox: f64, oy: f64) -> Self {
        RegionMapping {
            scale: 1.0,
            origin_x: ox,
            origin_y: oy,
        }
    }

    pub fn to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        (self.origin_x + self.scale * x, self.origin_y + self.scale * y)
    }

    pub fn to_region(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin_x) / self.scale, (y - self.origin_y) / self.scale)
    }

    pub fn bbox_to_frame(&self, b: &BBox) -> BBox {
        let (x, y) = self.to_frame(b.x, b.y);
        BBox::new(x, y, b.w * self.scale, b.h * self.scale)
    }

    pub fn bbox_to_region(&self, b: &BBox) -> BBox {
        let (x, y) = self.to_region(b.x, b.y);
        BBox::new(x, y, b.w / self.scale, b.h / self.scale)
    }

    /// Composite mapping: `self` applied after `inner`
    /// (`frame = self(inner(p))`).
    pub fn compose(&self, inner: &RegionMapping) -> RegionMapping {
        let (ox, oy) = self.to_frame(inner.origin_x, inner.origin_y);
        RegionMapping {
            scale: self.scale * inner.scale,
            origin_x: ox,
            origin_y: oy,
        }
    }
}
