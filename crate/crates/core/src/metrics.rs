//! Perturbation visibility metrics: SSIM, L1 mass, and the "super
//! perturbed" frame count used by the sweep reports.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// Window size of the SSIM Gaussian filter.
const SSIM_WINDOW: usize = 11;
/// Gaussian sigma of the SSIM window.
const SSIM_SIGMA: f64 = 1.5;
/// Stabilizers for an 8-bit dynamic range: `(k * 255)^2`.
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Frames whose SSIM against the clean frame falls below this are counted as
/// super perturbed.
pub const SUPER_PERTURBED_SSIM: f64 = 0.5;

/// Per-frame perturbation diagnostics as they land in reports.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PerturbDiagnostics {
    pub ssim: f64,
    pub l1: f64,
    pub super_perturbed: bool,
}

impl PerturbDiagnostics {
    pub fn from_values(ssim: f64, l1: f64) -> Self {
        PerturbDiagnostics {
            ssim,
            l1,
            super_perturbed: ssim < SUPER_PERTURBED_SSIM,
        }
    }

    /// Diagnostics of an untouched frame.
    pub fn clean() -> Self {
        PerturbDiagnostics {
            ssim: 1.0,
            l1: 0.0,
            super_perturbed: false,
        }
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW as f64 - 1.0) / 2.0;
    let mut sum = 0.0;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in g.iter_mut() {
        *v /= sum;
    }
    g
}

/// Separable valid Gaussian filter of one plane; output is
/// `(h-10) x (w-10)`.
fn filter_valid(plane: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        let trow = &mut tmp[y * ow..(y + 1) * ow];
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &gk) in g.iter().enumerate() {
                acc += gk * row[x + k];
            }
            trow[x] = acc;
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &gk) in g.iter().enumerate() {
                acc += gk * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Structural similarity between two `[C,H,W]` images on a `[0,255]` scale:
/// Gaussian-weighted local moments, stabilized ratio, averaged over all
/// valid windows and channels. Symmetric in its arguments; exactly 1 when
/// they are identical.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "ssim",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    if a.rank() != 3 {
        return Err(Error::shape(
            "ssim",
            format!("expected [C,H,W], got {:?}", a.shape()),
        ));
    }
    let (c, h, w) = (a.dim(0), a.dim(1), a.dim(2));
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Degenerate(format!(
            "ssim needs at least {0}x{0} pixels, got {1}x{2}",
            SSIM_WINDOW, h, w
        )));
    }
    let g = gaussian_window();
    let hw = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let xa = &a.data()[ch * hw..(ch + 1) * hw];
        let xb = &b.data()[ch * hw..(ch + 1) * hw];
        let mu_a = filter_valid(xa, h, w, &g);
        let mu_b = filter_valid(xb, h, w, &g);
        let aa: Vec<f64> = xa.iter().map(|&v| v * v).collect();
        let bb: Vec<f64> = xb.iter().map(|&v| v * v).collect();
        let ab: Vec<f64> = xa.iter().zip(xb).map(|(&u, &v)| u * v).collect();
        let e_aa = filter_valid(&aa, h, w, &g);
        let e_bb = filter_valid(&bb, h, w, &g);
        let e_ab = filter_valid(&ab, h, w, &g);

        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let ma = mu_a[i];
            let mb = mu_b[i];
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            acc += num / den;
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// Total absolute perturbation mass.
pub fn l1_norm(perturbation: &Tensor) -> f64 {
    perturbation.data().iter().map(|x| x.abs()).sum()
}

/// How many frames fell below the super-perturbed SSIM line (strict `<`).
pub fn count_super_perturbed(ssim_values: &[f64]) -> usize {
    ssim_values
        .iter()
        .filter(|&&s| s < SUPER_PERTURBED_SSIM)
        .count()
}
