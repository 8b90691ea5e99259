//! Square region extraction around a box, resampled to the tracker's fixed
//! net input size, plus the adjoint and the reverse paste.
//!
//! All frame/region coordinates are continuous with pixel `i` covering
//! `[i, i+1)` (center `i + 0.5`); [`bilinear_sample`] works in index space,
//! so samples shift by 0.5.

use crate::error::{Error, Result};
use crate::geom::{BBox, RegionMapping};
use crate::img::{bilinear_sample, bilinear_taps, image_dims, Image};
use crate::tensor::Tensor;

/// A resampled crop plus the affine map back to frame coordinates.
#[derive(Clone, Debug)]
pub struct RegionCrop {
    /// `[3, side, side]` pixels in the frame's value range.
    pub pixels: Tensor,
    /// Region -> frame coordinate map.
    pub mapping: RegionMapping,
}

/// Side of the square crop window for a box: `factor * max(w, h)`.
pub fn square_side(bbox: &BBox, factor: f64) -> Result<f64> {
    if bbox.is_degenerate() {
        return Err(Error::Degenerate(format!(
            "cannot crop around a box of size {}x{}",
            bbox.w, bbox.h
        )));
    }
    Ok(factor * bbox.w.max(bbox.h))
}

/// Extract a `side`-sized square centered at `center` (frame coordinates)
/// and resample it to `out_side` x `out_side` with edge-clamped bilinear
/// interpolation.
pub fn extract_region(
    frame: &Image,
    center: (f64, f64),
    side: f64,
    out_side: usize,
) -> Result<RegionCrop> {
    image_dims(frame)?;
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::Degenerate(format!("crop side {} not positive", side)));
    }
    if out_side == 0 {
        return Err(Error::Config("zero-sized crop output".into()));
    }
    let mapping = RegionMapping {
        scale: side / out_side as f64,
        origin_x: center.0 - side / 2.0,
        origin_y: center.1 - side / 2.0,
    };
    let mut pixels = Tensor::zeros([3, out_side, out_side]);
    for i in 0..out_side {
        for j in 0..out_side {
            let (fx, fy) = mapping.to_frame(j as f64 + 0.5, i as f64 + 0.5);
            for c in 0..3 {
                pixels.set(&[c, i, j], bilinear_sample(frame, c, fx - 0.5, fy - 0.5));
            }
        }
    }
    Ok(RegionCrop { pixels, mapping })
}

/// Adjoint of [`extract_region`]: scatter a region-pixel gradient back onto
/// the frame. Linear, so this is exact (it mirrors the forward taps,
/// clamping included).
pub fn extract_region_vjp(
    frame: &Image,
    mapping: &RegionMapping,
    grad_region: &Tensor,
) -> Result<Tensor> {
    let (h, w) = image_dims(frame)?;
    if grad_region.rank() != 3 || grad_region.dim(0) != 3 || grad_region.dim(1) != grad_region.dim(2)
    {
        return Err(Error::shape(
            "extract_region_vjp",
            format!("region gradient {:?}", grad_region.shape()),
        ));
    }
    let out_side = grad_region.dim(1);
    let mut dframe = Tensor::zeros([3, h, w]);
    let df = dframe.data_mut();
    for i in 0..out_side {
        for j in 0..out_side {
            let (fx, fy) = mapping.to_frame(j as f64 + 0.5, i as f64 + 0.5);
            let (x0, y0, x1, y1, px, py) = bilinear_taps(h, w, fx - 0.5, fy - 0.5);
            for c in 0..3 {
                let g = grad_region.at(&[c, i, j]);
                if g == 0.0 {
                    continue;
                }
                let base = c * h * w;
                df[base + y0 * w + x0] += g * (1.0 - py) * (1.0 - px);
                df[base + y0 * w + x1] += g * (1.0 - py) * px;
                df[base + y1 * w + x0] += g * py * (1.0 - px);
                df[base + y1 * w + x1] += g * py * px;
            }
        }
    }
    Ok(dframe)
}

/// Add a region-space delta into the frame: every frame pixel inside the
/// region window samples the delta bilinearly at its own region coordinate.
/// The result is not clamped; callers handle the valid pixel range.
pub fn paste_region_delta(frame: &Image, delta: &Tensor, mapping: &RegionMapping) -> Result<Image> {
    let (h, w) = image_dims(frame)?;
    if delta.rank() != 3 || delta.dim(0) != 3 || delta.dim(1) != delta.dim(2) {
        return Err(Error::shape(
            "paste_region_delta",
            format!("delta {:?}", delta.shape()),
        ));
    }
    let side = delta.dim(1) as f64;
    let mut out = frame.clone();
    // Frame-space window of the region bounds the scan.
    let (fx0, fy0) = mapping.to_frame(0.0, 0.0);
    let (fx1, fy1) = mapping.to_frame(side, side);
    let x_lo = fx0.floor().max(0.0) as usize;
    let y_lo = fy0.floor().max(0.0) as usize;
    let x_hi = (fx1.ceil() as usize).min(w);
    let y_hi = (fy1.ceil() as usize).min(h);
    for iy in y_lo..y_hi {
        for ix in x_lo..x_hi {
            let (rx, ry) = mapping.to_region(ix as f64 + 0.5, iy as f64 + 0.5);
            if rx < 0.0 || ry < 0.0 || rx > side || ry > side {
                continue;
            }
            for c in 0..3 {
                let d = bilinear_sample(delta, c, rx - 0.5, ry - 0.5);
                let idx = [c, iy, ix];
                out.set(&idx, out.at(&idx) + d);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn frame(h: usize, w: usize) -> Image {
        Tensor::from_fn([3, h, w], |i| ((i * 37) % 251) as f64)
    }

    #[test]
    fn aligned_unit_scale_crop_copies_pixels() {
        let f = frame(16, 16);
        // 8x8 window whose origin lands on integer pixel boundaries.
        let crop = extract_region(&f, (8.0, 6.0), 8.0, 8).unwrap();
        assert_eq!(crop.mapping.scale, 1.0);
        for i in 0..8 {
            for j in 0..8 {
                for c in 0..3 {
                    assert_eq!(crop.pixels.at(&[c, i, j]), f.at(&[c, i + 2, j + 4]));
                }
            }
        }
    }

    #[test]
    fn vjp_matches_directional_difference() {
        // The op is linear, so <g, J d> must equal <Jᵀ g, d> exactly
        // (up to floating-point rounding).
        let f = frame(12, 12);
        let crop = extract_region(&f, (5.3, 6.7), 7.5, 6).unwrap();
        let mut r = rng::stream(3, &[rng::tag("crop-vjp")]);
        let g = Tensor::rand_uniform([3, 6, 6], -1.0, 1.0, &mut r);
        let d = Tensor::rand_uniform([3, 12, 12], -1.0, 1.0, &mut r);
        let bumped = f.add(&d).unwrap();
        let crop2 = extract_region(&bumped, (5.3, 6.7), 7.5, 6).unwrap();
        let lhs = crop2.pixels.sub(&crop.pixels).unwrap().dot(&g).unwrap();
        let rhs = extract_region_vjp(&f, &crop.mapping, &g)
            .unwrap()
            .dot(&d)
            .unwrap();
        assert!((lhs - rhs).abs() < 1e-9, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn paste_then_extract_recovers_delta_at_unit_scale() {
        let f = frame(16, 16);
        let crop = extract_region(&f, (8.0, 8.0), 8.0, 8).unwrap();
        let mut r = rng::stream(5, &[rng::tag("paste")]);
        let delta = Tensor::rand_uniform([3, 8, 8], -3.0, 3.0, &mut r);
        let pasted = paste_region_delta(&f, &delta, &crop.mapping).unwrap();
        let crop2 = extract_region(&pasted, (8.0, 8.0), 8.0, 8).unwrap();
        let diff = crop2.pixels.sub(&crop.pixels).unwrap();
        for (a, b) in diff.data().iter().zip(delta.data()) {
            assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn degenerate_box_is_rejected() {
        assert!(square_side(&BBox::new(0.0, 0.0, 0.0, 3.0), 2.0).is_err());
        assert!((square_side(&BBox::new(0.0, 0.0, 3.0, 4.0), 2.0).unwrap() - 8.0).abs() < 1e-12);
    }
}
