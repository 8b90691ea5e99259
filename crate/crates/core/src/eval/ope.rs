//! One-pass evaluation: success/precision curves and their scalar
//! summaries.

use crate::error::{Error, Result};
use crate::eval::{bbox_iou, mask_iou, OverlapMode, SequenceResult, SequenceTracker, StepOutput};
use crate::geom::BBox;
use crate::synth::SequenceRecord;

/// Success thresholds: 0.0, 0.05, ..., 1.0.
pub const SUCCESS_STEPS: usize = 21;
/// Precision thresholds: 0, 1, ..., 50 pixels.
pub const PRECISION_STEPS: usize = 51;
/// Normalized precision thresholds: 0.0, 0.005, ..., 0.5.
pub const NORM_PRECISION_STEPS: usize = 101;

/// Fraction of frames whose overlap strictly exceeds each threshold in
/// `0.0..=1.0` (step 0.05). A perfect run scores 0 at the final threshold
/// because `1.0 > 1.0` is false.
pub fn success_curve(overlaps: &[f64]) -> Result<Vec<f64>> {
    if overlaps.is_empty() {
        return Err(Error::Degenerate("success_curve of no overlaps".into()));
    }
    let n = overlaps.len() as f64;
    Ok((0..SUCCESS_STEPS)
        .map(|i| {
            let thr = i as f64 * 0.05;
            overlaps.iter().filter(|&&o| o > thr).count() as f64 / n
        })
        .collect())
}

/// Mean of a threshold curve (the usual area-under-curve summary).
pub fn auc(curve: &[f64]) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::Degenerate("auc of empty curve".into()));
    }
    Ok(curve.iter().sum::<f64>() / curve.len() as f64)
}

/// Fraction of frames whose center error is within each threshold in
/// `0..=50` pixels (inclusive boundary).
pub fn precision_curve(center_errors: &[f64]) -> Result<Vec<f64>> {
    if center_errors.is_empty() {
        return Err(Error::Degenerate("precision_curve of no errors".into()));
    }
    let n = center_errors.len() as f64;
    Ok((0..PRECISION_STEPS)
        .map(|px| {
            let thr = px as f64;
            center_errors.iter().filter(|&&e| e <= thr).count() as f64 / n
        })
        .collect())
}

/// Precision at an integer pixel threshold (reports usually quote 20 px).
pub fn precision_at(curve: &[f64], px: usize) -> Result<f64> {
    curve
        .get(px)
        .copied()
        .ok_or_else(|| Error::Degenerate(format!("precision curve has no {} px entry", px)))
}

/// Curve over normalized center errors for thresholds `0.0..=0.5`
/// (step 0.005).
pub fn norm_precision_curve(norm_errors: &[f64]) -> Result<Vec<f64>> {
    if norm_errors.is_empty() {
        return Err(Error::Degenerate("norm_precision of no errors".into()));
    }
    let n = norm_errors.len() as f64;
    Ok((0..NORM_PRECISION_STEPS)
        .map(|i| {
            let thr = i as f64 * 0.005;
            norm_errors.iter().filter(|&&e| e <= thr).count() as f64 / n
        })
        .collect())
}

/// Scalar normalized precision: mean of [`norm_precision_curve`].
pub fn norm_precision(norm_errors: &[f64]) -> Result<f64> {
    auc(&norm_precision_curve(norm_errors)?)
}

/// `(AO, SR@0.5, SR@0.75)`: average overlap plus strict success rates.
pub fn ao_sr(overlaps: &[f64]) -> Result<(f64, f64, f64)> {
    if overlaps.is_empty() {
        return Err(Error::Degenerate("ao_sr of no overlaps".into()));
    }
    let n = overlaps.len() as f64;
    let ao = overlaps.iter().sum::<f64>() / n;
    let sr = |thr: f64| overlaps.iter().filter(|&&o| o > thr).count() as f64 / n;
    Ok((ao, sr(0.5), sr(0.75)))
}

/// Center error of a prediction against ground truth, normalized per axis by
/// the ground-truth size. Errors out on degenerate ground truth.
pub fn normalized_center_error(pred: &BBox, gt: &BBox) -> Result<f64> {
    if gt.is_degenerate() {
        return Err(Error::Degenerate(
            "normalized center error against zero-size ground truth".into(),
        ));
    }
    let dx = (pred.cx() - gt.cx()) / gt.w;
    let dy = (pred.cy() - gt.cy()) / gt.h;
    Ok((dx * dx + dy * dy).sqrt())
}

/// One-pass run: initialize on frame 0, track every later frame, score
/// box IoU (and mask IoU when the driver yields masks and `mode` wants it).
///
/// Frame 0 is scored against itself (the initialization box and mask are the
/// ground truth), so every per-frame list in the result has exactly one entry
/// per sequence frame.
pub fn ope_run(
    driver: &mut dyn SequenceTracker,
    seq: &SequenceRecord,
    mode: OverlapMode,
) -> Result<SequenceResult> {
    if seq.frames.len() < 2 {
        return Err(Error::Degenerate(format!(
            "sequence '{}' too short for a one-pass run",
            seq.name
        )));
    }
    driver.begin(seq, 0)?;
    let mut res = SequenceResult {
        name: seq.name.clone(),
        ..Default::default()
    };
    let init = seq.gt_boxes[0].clone();
    res.overlaps.push(bbox_iou(&init, &seq.gt_boxes[0]));
    res.center_errors.push(init.center_distance(&seq.gt_boxes[0]));
    res.norm_center_errors
        .push(normalized_center_error(&init, &seq.gt_boxes[0])?);
    if mode == OverlapMode::Mask {
        res.mask_overlaps
            .push(mask_iou(&seq.gt_masks[0], &seq.gt_masks[0])?);
    }
    res.masks.push(Some(seq.gt_masks[0].clone()));
    res.predictions.push(init);
    for t in 1..seq.frames.len() {
        let StepOutput { bbox, mask, diag } = driver.step(seq, t)?;
        let gt = &seq.gt_boxes[t];
        res.overlaps.push(bbox_iou(&bbox, gt));
        res.center_errors.push(bbox.center_distance(gt));
        res.norm_center_errors.push(normalized_center_error(&bbox, gt)?);
        if let Some(d) = diag {
            res.diagnostics.push(d);
        }
        if mode == OverlapMode::Mask {
            let m = mask.as_ref().ok_or_else(|| {
                Error::Config("mask-based evaluation requested but the tracker emits no mask".into())
            })?;
            res.mask_overlaps.push(mask_iou(m, &seq.gt_masks[t])?);
        }
        res.masks.push(mask);
        res.predictions.push(bbox);
    }
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_overlaps_give_auc_twenty_over_twentyone() {
        let curve = success_curve(&[1.0; 10]).unwrap();
        assert_eq!(curve.len(), SUCCESS_STEPS);
        assert_eq!(curve[0], 1.0);
        assert_eq!(curve[20], 0.0, "1.0 > 1.0 must be false");
        assert!((auc(&curve).unwrap() - 20.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn success_curve_is_monotone_nonincreasing() {
        let curve = success_curve(&[0.1, 0.3, 0.55, 0.72, 0.99]).unwrap();
        for w in curve.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn precision_boundary_is_inclusive() {
        let curve = precision_curve(&[20.0]).unwrap();
        assert_eq!(curve.len(), PRECISION_STEPS);
        assert_eq!(precision_at(&curve, 20).unwrap(), 1.0);
        assert_eq!(precision_at(&curve, 19).unwrap(), 0.0);
    }

    #[test]
    fn norm_precision_zero_errors_is_one() {
        assert_eq!(norm_precision(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn norm_precision_full_width_error_contributes_zero() {
        // One whole ground-truth width of error exceeds the 0.5 cap.
        let np = norm_precision(&[1.0]).unwrap();
        assert_eq!(np, 0.0);
    }

    #[test]
    fn ao_sr_thresholds_are_strict() {
        let (ao, sr50, sr75) = ao_sr(&[0.6, 0.8]).unwrap();
        assert!((ao - 0.7).abs() < 1e-12);
        assert_eq!(sr50, 1.0);
        assert_eq!(sr75, 0.5);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(success_curve(&[]).is_err());
        assert!(precision_curve(&[]).is_err());
        assert!(norm_precision(&[]).is_err());
        assert!(ao_sr(&[]).is_err());
    }
}
