//! Tracking evaluation protocols and their summary metrics.
//!
//! Two protocols are provided: a one-pass run from the first frame
//! ([`ope`], success/precision style) and a re-initializing run from fixed
//! anchor frames ([`anchor`], robustness/accuracy/EAO style). Both operate
//! on any [`SequenceTracker`] — real trackers, attacked trackers, and the
//! scripted stand-ins used by the protocol oracle tests.

pub mod anchor;
pub mod ope;
pub mod scripted;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::img::BinaryMap;
use crate::metrics::PerturbDiagnostics;
use crate::synth::SequenceRecord;

pub use anchor::{anchor_evaluate, anchor_metrics, AnchorRun};
pub use scripted::ScriptedTracker;
pub use ope::{
    ao_sr, auc, norm_precision, norm_precision_curve, ope_run, precision_at, precision_curve,
    success_curve,
};

/// Which overlap a protocol scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapMode {
    Box,
    Mask,
}

/// What a tracker hands back for one frame.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub bbox: BBox,
    /// Frame-space predicted mask, when the tracker produces one.
    pub mask: Option<BinaryMap>,
    /// Perturbation diagnostics for attacked steps.
    pub diag: Option<PerturbDiagnostics>,
}

/// Minimal driver interface the protocols need. `begin` (re-)initializes on
/// a ground-truth frame, `step` tracks one subsequent frame.
pub trait SequenceTracker {
    fn begin(&mut self, seq: &SequenceRecord, frame_idx: usize) -> Result<()>;
    fn step(&mut self, seq: &SequenceRecord, frame_idx: usize) -> Result<StepOutput>;
}

/// Everything a single one-pass run produces.
#[derive(Clone, Debug, Default)]
pub struct SequenceResult {
    pub name: String,
    pub predictions: Vec<BBox>,
    pub masks: Vec<Option<BinaryMap>>,
    /// Box IoU against ground truth, one per tracked frame.
    pub overlaps: Vec<f64>,
    /// Mask IoU against ground truth where both are available.
    pub mask_overlaps: Vec<f64>,
    pub center_errors: Vec<f64>,
    pub norm_center_errors: Vec<f64>,
    pub diagnostics: Vec<PerturbDiagnostics>,
}

/// Summary metrics across one experiment arm. Which fields are meaningful
/// depends on the protocol that filled the bundle; the rest stay zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub eao: f64,
    pub accuracy: f64,
    pub robustness: f64,
    pub auc: f64,
    pub precision_at_20: f64,
    pub norm_precision: f64,
    pub ao: f64,
    pub sr_050: f64,
    pub sr_075: f64,
}

impl MetricBundle {
    pub fn fields() -> [&'static str; 9] {
        [
            "EAO",
            "Accuracy",
            "Robustness",
            "AUC",
            "Precision@20",
            "NormPrecision",
            "AO",
            "SR0.50",
            "SR0.75",
        ]
    }

    pub fn get(&self, field: &str) -> Option<f64> {
        match field {
            "EAO" => Some(self.eao),
            "Accuracy" => Some(self.accuracy),
            "Robustness" => Some(self.robustness),
            "AUC" => Some(self.auc),
            "Precision@20" => Some(self.precision_at_20),
            "NormPrecision" => Some(self.norm_precision),
            "AO" => Some(self.ao),
            "SR0.50" => Some(self.sr_050),
            "SR0.75" => Some(self.sr_075),
            _ => None,
        }
    }

    /// Field-wise mean over several bundles.
    pub fn mean(bundles: &[MetricBundle]) -> Result<MetricBundle> {
        if bundles.is_empty() {
            return Err(Error::Degenerate("mean over zero metric bundles".into()));
        }
        let n = bundles.len() as f64;
        let mut out = MetricBundle::default();
        for b in bundles {
            out.eao += b.eao;
            out.accuracy += b.accuracy;
            out.robustness += b.robustness;
            out.auc += b.auc;
            out.precision_at_20 += b.precision_at_20;
            out.norm_precision += b.norm_precision;
            out.ao += b.ao;
            out.sr_050 += b.sr_050;
            out.sr_075 += b.sr_075;
        }
        out.eao /= n;
        out.accuracy /= n;
        out.robustness /= n;
        out.auc /= n;
        out.precision_at_20 /= n;
        out.norm_precision /= n;
        out.ao /= n;
        out.sr_050 /= n;
        out.sr_075 /= n;
        Ok(out)
    }
}

/// Intersection over union of two boxes. Boxes with non-positive extent
/// contribute zero area; a zero union gives 0 by convention.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let aw = a.w.max(0.0);
    let ah = a.h.max(0.0);
    let bw = b.w.max(0.0);
    let bh = b.h.max(0.0);
    let ix = (a.x + aw).min(b.x + bw) - a.x.max(b.x);
    let iy = (a.y + ah).min(b.y + bh) - a.y.max(b.y);
    let inter = ix.max(0.0) * iy.max(0.0);
    let union = aw * ah + bw * bh - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Intersection over union of two binary maps. Two empty masks count as a
/// perfect match (1.0).
pub fn mask_iou(a: &BinaryMap, b: &BinaryMap) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape(
            "mask_iou",
            format!(
                "{}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            ),
        ));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&pa, &pb) in a.data().iter().zip(b.data()) {
        if pa && pb {
            inter += 1;
        }
        if pa || pb {
            union += 1;
        }
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// `100 * (original - attacked) / original`; undefined for a zero baseline.
pub fn drop_percentage(original: f64, attacked: f64) -> Result<f64> {
    if original == 0.0 {
        return Err(Error::UndefinedDrop);
    }
    Ok(100.0 * (original - attacked) / original)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identical_is_one() {
        let b = BBox::new(3.0, 4.0, 10.0, 12.0);
        assert_eq!(bbox_iou(&b, &b), 1.0);
    }

    #[test]
    fn iou_disjoint_is_zero() {
        let a = BBox::new(0.0, 0.0, 5.0, 5.0);
        let b = BBox::new(10.0, 10.0, 5.0, 5.0);
        assert_eq!(bbox_iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_shift() {
        // Unit squares offset by half a side: inter 0.5, union 1.5.
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(0.5, 0.0, 1.0, 1.0);
        assert!((bbox_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_degenerate_is_zero() {
        let a = BBox::new(0.0, 0.0, 0.0, 0.0);
        let b = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(bbox_iou(&a, &a), 0.0);
        assert_eq!(bbox_iou(&a, &b), 0.0);
    }

    #[test]
    fn mask_iou_empty_pair_is_one() {
        let a = BinaryMap::new(4, 4);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn mask_iou_counts_pixels() {
        let mut a = BinaryMap::new(2, 2);
        let mut b = BinaryMap::new(2, 2);
        a.set(0, 0, true);
        a.set(1, 0, true);
        b.set(1, 0, true);
        b.set(1, 1, true);
        assert!((mask_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn drop_percentage_matches_reported_arithmetic() {
        assert!((drop_percentage(0.299, 0.231).unwrap() - 22.74).abs() < 0.005);
        assert!((drop_percentage(0.472, 0.477).unwrap() - -1.06).abs() < 0.005);
        assert!(matches!(
            drop_percentage(0.0, 0.1),
            Err(Error::UndefinedDrop)
        ));
    }

    #[test]
    fn bundle_mean_requires_input() {
        assert!(MetricBundle::mean(&[]).is_err());
        let a = MetricBundle {
            auc: 0.4,
            ..Default::default()
        };
        let b = MetricBundle {
            auc: 0.8,
            ..Default::default()
        };
        assert!((MetricBundle::mean(&[a, b]).unwrap().auc - 0.6).abs() < 1e-12);
    }
}
