//! Re-initialization protocol: runs from anchor frames, failure detection,
//! and the robustness / accuracy / expected-overlap summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{bbox_iou, mask_iou, MetricBundle, OverlapMode, SequenceTracker};
use crate::synth::SequenceRecord;

/// Overlap below which a frame counts as a tracking failure.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.1;

/// One run of the anchor protocol.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AnchorRun {
    /// Frame the tracker was (re-)initialized on.
    pub anchor_frame: usize,
    /// Per-frame overlap from the frame after the anchor up to the failure
    /// frame (inclusive) or the sequence end.
    pub run_overlaps: Vec<f64>,
    pub failed: bool,
    /// Run-frame index (0 = first tracked frame) where the failure fired.
    pub failure_frame: Option<usize>,
    /// Scorable frames the run could have covered (anchor to sequence end);
    /// the denominator for robustness.
    pub span: usize,
}

impl AnchorRun {
    /// Frames tracked with overlap at or above the failure threshold.
    pub fn successful_frames(&self) -> usize {
        self.run_overlaps.len() - if self.failed { 1 } else { 0 }
    }
}

/// Run the tracker from every anchor: re-initialize on the anchor's ground
/// truth, track until the overlap drops below `failure_threshold` or the
/// sequence ends. Anchors with nothing left to track are skipped.
pub fn anchor_evaluate(
    driver: &mut dyn SequenceTracker,
    seq: &SequenceRecord,
    anchors: &[usize],
    mode: OverlapMode,
    failure_threshold: f64,
) -> Result<Vec<AnchorRun>> {
    if !(0.0..1.0).contains(&failure_threshold) {
        return Err(Error::Config(format!(
            "failure threshold must be in [0,1), got {}",
            failure_threshold
        )));
    }
    let len = seq.frames.len();
    let mut runs = Vec::new();
    for &a in anchors {
        if a >= len {
            return Err(Error::Config(format!(
                "anchor {} outside sequence '{}' of {} frames",
                a, seq.name, len
            )));
        }
        let span = len - a - 1;
        if span == 0 {
            continue;
        }
        driver.begin(seq, a)?;
        let mut run = AnchorRun {
            anchor_frame: a,
            run_overlaps: Vec::with_capacity(span),
            failed: false,
            failure_frame: None,
            span,
        };
        for t in a + 1..len {
            let out = driver.step(seq, t)?;
            let ov = match mode {
                OverlapMode::Box => bbox_iou(&out.bbox, &seq.gt_boxes[t]),
                OverlapMode::Mask => {
                    let m = out.mask.as_ref().ok_or_else(|| {
                        Error::Config(
                            "mask-based evaluation requested but the tracker emits no mask".into(),
                        )
                    })?;
                    mask_iou(m, &seq.gt_masks[t])?
                }
            };
            run.run_overlaps.push(ov);
            if ov < failure_threshold {
                run.failed = true;
                run.failure_frame = Some(t - a - 1);
                break;
            }
        }
        runs.push(run);
    }
    Ok(runs)
}

/// Robustness / accuracy / expected average overlap across runs.
///
/// * robustness — mean over runs of successful frames / span;
/// * accuracy  — mean overlap pooled over successful frames only (0 by
///   convention when no frame succeeded);
/// * eao       — mean over runs of the run's overlap list, zero-padded to
///   `horizon` after a failure, truncated at `horizon`; runs that simply hit
///   the sequence end are averaged over what they have.
pub fn anchor_metrics(runs: &[AnchorRun], horizon: usize) -> Result<MetricBundle> {
    if runs.is_empty() {
        return Err(Error::Degenerate("anchor_metrics of zero runs".into()));
    }
    if horizon == 0 {
        return Err(Error::Config("eao horizon must be positive".into()));
    }
    let mut robustness = 0.0;
    let mut acc_sum = 0.0;
    let mut acc_frames = 0usize;
    let mut eao = 0.0;
    for run in runs {
        robustness += run.successful_frames() as f64 / run.span as f64;
        for &ov in &run.run_overlaps[..run.successful_frames()] {
            acc_sum += ov;
            acc_frames += 1;
        }
        let covered = run.run_overlaps.len().min(horizon);
        let sum: f64 = run.run_overlaps[..covered].iter().sum();
        let denom = if run.failed {
            // Post-failure frames count as zero overlap up to the horizon.
            horizon
        } else {
            covered
        };
        eao += sum / denom as f64;
    }
    let n = runs.len() as f64;
    Ok(MetricBundle {
        eao: eao / n,
        accuracy: if acc_frames == 0 {
            0.0
        } else {
            acc_sum / acc_frames as f64
        },
        robustness: robustness / n,
        ..Default::default()
    })
}

/// Default anchor placement: every `spacing` frames from 0.
pub fn default_anchors(sequence_len: usize, spacing: usize) -> Vec<usize> {
    (0..sequence_len).step_by(spacing.max(1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(overlaps: Vec<f64>, failed: bool, span: usize) -> AnchorRun {
        let failure_frame = failed.then(|| overlaps.len() - 1);
        AnchorRun {
            anchor_frame: 0,
            run_overlaps: overlaps,
            failed,
            failure_frame,
            span,
        }
    }

    #[test]
    fn hand_traced_failed_run() {
        // Ten potential frames, 0.8 overlap for five frames, failure (0.0)
        // on the sixth: robustness 0.5, accuracy 0.8, eao 0.4.
        let r = run(vec![0.8, 0.8, 0.8, 0.8, 0.8, 0.0], true, 10);
        let m = anchor_metrics(&[r], 10).unwrap();
        assert!((m.robustness - 0.5).abs() < 1e-12);
        assert!((m.accuracy - 0.8).abs() < 1e-12);
        assert!((m.eao - 0.4).abs() < 1e-12);
    }

    #[test]
    fn perfect_runs_score_ones() {
        let runs = vec![run(vec![1.0; 7], false, 7), run(vec![1.0; 4], false, 4)];
        let m = anchor_metrics(&runs, 10).unwrap();
        assert_eq!((m.eao, m.accuracy, m.robustness), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_failures_at_start_hit_zero_convention() {
        let runs = vec![run(vec![0.0], true, 5), run(vec![0.0], true, 9)];
        let m = anchor_metrics(&runs, 10).unwrap();
        assert_eq!((m.eao, m.accuracy, m.robustness), (0.0, 0.0, 0.0));
    }

    #[test]
    fn anchors_every_fifty_on_120_frames() {
        assert_eq!(default_anchors(120, 50), vec![0, 50, 100]);
    }

    #[test]
    fn empty_runs_error() {
        assert!(anchor_metrics(&[], 10).is_err());
    }
}
