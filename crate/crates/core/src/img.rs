//! Image conventions and binary maps.
//!
//! A frame is a `Tensor` of shape `[3, H, W]` with values in `[0, 255]`
//! (f64; synthetic frames are generated on integer values so they survive
//! 8-bit round trips). Masks are plain boolean grids.

use crate::error::{Error, Result};
use crate::geom::RegionMapping;
use crate::tensor::Tensor;

/// Alias documenting the `[3, H, W]` / `[0,255]` convention.
pub type Image = Tensor;

/// `(height, width)` of an RGB image tensor.
pub fn image_dims(img: &Image) -> Result<(usize, usize)> {
    if img.rank() != 3 || img.dim(0) != 3 {
        return Err(Error::shape(
            "image_dims",
            format!("expected [3,H,W], got {:?}", img.shape()),
        ));
    }
    Ok((img.dim(1), img.dim(2)))
}

/// Integer taps and fractional weights behind [`bilinear_sample`], exposed so
/// adjoint code can scatter into exactly the same cells (edge clamping
/// included): `(x0, y0, x1, y1, fx, fy)`.
pub fn bilinear_taps(h: usize, w: usize, x: f64, y: f64) -> (usize, usize, usize, usize, f64, f64) {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    (x0, y0, x1, y1, x - x0 as f64, y - y0 as f64)
}

/// Bilinear sample with edge clamping, one channel. Coordinates are in index
/// space: `x = 0.0` lands exactly on the first pixel.
pub fn bilinear_sample(img: &Image, ch: usize, x: f64, y: f64) -> f64 {
    let (h, w) = (img.dim(1), img.dim(2));
    let (x0, y0, x1, y1, fx, fy) = bilinear_taps(h, w, x, y);
    let data = img.data();
    let base = ch * h * w;
    let v00 = data[base + y0 * w + x0];
    let v01 = data[base + y0 * w + x1];
    let v10 = data[base + y1 * w + x0];
    let v11 = data[base + y1 * w + x1];
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

/// Dense boolean grid (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMap {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMap {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::shape(
                "BinaryMap::from_data",
                format!("{}x{} wants {} bits, got {}", width, height, width * height, data.len()),
            ));
        }
        Ok(BinaryMap { width, height, data })
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty_mask(&self) -> bool {
        self.data.iter().all(|&b| !b)
    }
}

/// Transfer a region-space mask into frame space (nearest neighbor through
/// the inverse mapping). Pixels outside the region stay false.
pub fn paste_region_mask(
    mask: &BinaryMap,
    mapping: &RegionMapping,
    frame_w: usize,
    frame_h: usize,
) -> BinaryMap {
    let mut out = BinaryMap::new(frame_w, frame_h);
    // Frame-space bounding box of the region keeps the scan cheap.
    let (fx0, fy0) = mapping.to_frame(-0.5, -0.5);
    let (fx1, fy1) = mapping.to_frame(mask.width as f64 - 0.5, mask.height as f64 - 0.5);
    let x0 = fx0.floor().max(0.0) as usize;
    let y0 = fy0.floor().max(0.0) as usize;
    let x1 = (fx1.ceil() as isize).clamp(0, frame_w as isize) as usize;
    let y1 = (fy1.ceil() as isize).clamp(0, frame_h as isize) as usize;
    for fy in y0..y1 {
        for fx in x0..x1 {
            let (rx, ry) = mapping.to_region(fx as f64, fy as f64);
            let rxi = rx.round();
            let ryi = ry.round();
            if rxi >= 0.0 && ryi >= 0.0 && (rxi as usize) < mask.width && (ryi as usize) < mask.height
            {
                if mask.get(rxi as usize, ryi as usize) {
                    out.set(fx, fy, true);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolates_midpoints() {
        let img = Tensor::new([3, 2, 2], vec![0.0, 10.0, 20.0, 30.0, 0.0, 0.0, 0.0, 0.0, 5.0, 5.0, 5.0, 5.0])
            .unwrap();
        assert_eq!(bilinear_sample(&img, 0, 0.0, 0.0), 0.0);
        assert_eq!(bilinear_sample(&img, 0, 1.0, 1.0), 30.0);
        assert!((bilinear_sample(&img, 0, 0.5, 0.5) - 15.0).abs() < 1e-12);
        // Edge clamp.
        assert_eq!(bilinear_sample(&img, 0, -5.0, 0.0), 0.0);
        assert_eq!(bilinear_sample(&img, 2, 0.25, 0.75), 5.0);
    }

    #[test]
    fn paste_mask_translation_only() {
        let mut m = BinaryMap::new(2, 2);
        m.set(0, 0, true);
        m.set(1, 1, true);
        let out = paste_region_mask(&m, &RegionMapping::translation(3.0, 1.0), 8, 8);
        assert!(out.get(3, 1));
        assert!(out.get(4, 2));
        assert_eq!(out.count_true(), 2);
    }
}
