//! A tracker that replays predetermined outputs. Used to validate the
//! evaluation protocols against hand-computed expectations.

use crate::error::{Error, Result};
use crate::eval::{SequenceTracker, StepOutput};
use crate::geom::BBox;
use crate::img::BinaryMap;
use crate::synth::SequenceRecord;

/// Replays a fixed per-frame box (and optionally mask) script, indexed by the
/// global frame number. Re-initialization is a no-op: the script already
/// fixes every output.
pub struct ScriptedTracker {
    boxes: Vec<BBox>,
    masks: Option<Vec<BinaryMap>>,
}

impl ScriptedTracker {
    pub fn new(boxes: Vec<BBox>) -> Self {
        ScriptedTracker { boxes, masks: None }
    }

    pub fn with_masks(boxes: Vec<BBox>, masks: Vec<BinaryMap>) -> Self {
        ScriptedTracker {
            boxes,
            masks: Some(masks),
        }
    }

    /// Script that echoes the ground truth exactly — the perfect tracker.
    pub fn perfect(seq: &SequenceRecord) -> Self {
        ScriptedTracker {
            boxes: seq.gt_boxes.clone(),
            masks: Some(seq.gt_masks.clone()),
        }
    }

    /// Script derived from the ground truth by a per-frame transform.
    pub fn from_gt<F>(seq: &SequenceRecord, f: F) -> Self
    where
        F: Fn(usize, &BBox) -> BBox,
    {
        ScriptedTracker {
            boxes: seq
                .gt_boxes
                .iter()
                .enumerate()
                .map(|(t, b)| f(t, b))
                .collect(),
            masks: None,
        }
    }
}

impl SequenceTracker for ScriptedTracker {
    fn begin(&mut self, seq: &SequenceRecord, frame_idx: usize) -> Result<()> {
        if self.boxes.len() != seq.frames.len() {
            return Err(Error::Config(format!(
                "script covers {} frames but sequence '{}' has {}",
                self.boxes.len(),
                seq.name,
                seq.frames.len()
            )));
        }
        if frame_idx >= self.boxes.len() {
            return Err(Error::Config(format!(
                "initialization frame {} outside script of {} frames",
                frame_idx,
                self.boxes.len()
            )));
        }
        Ok(())
    }

    fn step(&mut self, _seq: &SequenceRecord, frame_idx: usize) -> Result<StepOutput> {
        let bbox = *self.boxes.get(frame_idx).ok_or_else(|| {
            Error::Config(format!("scripted step {} outside script", frame_idx))
        })?;
        let mask = self.masks.as_ref().map(|m| m[frame_idx].clone());
        Ok(StepOutput {
            bbox,
            mask,
            diag: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ope::{auc, ope_run, SUCCESS_STEPS};
    use crate::eval::{success_curve, OverlapMode};
    use crate::synth::{standard_suite, SuiteParams};

    #[test]
    fn perfect_script_has_maximal_auc() {
        let suite = standard_suite(&SuiteParams {
            seed: 7,
            sequences: 1,
            frames: 12,
            ..Default::default()
        })
        .unwrap();
        let seq = &suite[0];
        let mut tracker = ScriptedTracker::perfect(seq);
        let result = ope_run(&mut tracker, seq, OverlapMode::Box).unwrap();
        let curve = success_curve(&result.overlaps).unwrap();
        // Overlap 1.0 clears every threshold except the top one (strict >).
        assert!((auc(&curve).unwrap() - 20.0 / 21.0).abs() < 1e-12);
        assert_eq!(curve.len(), SUCCESS_STEPS);
        assert_eq!(curve[SUCCESS_STEPS - 1], 0.0);
    }

    #[test]
    fn script_length_mismatch_is_rejected() {
        let suite = standard_suite(&SuiteParams {
            seed: 7,
            sequences: 1,
            frames: 12,
            ..Default::default()
        })
        .unwrap();
        let seq = &suite[0];
        let mut tracker = ScriptedTracker::new(vec![BBox::new(0.0, 0.0, 4.0, 4.0); 5]);
        assert!(tracker.begin(seq, 0).is_err());
    }
}
