//! Glue between trackers, attack sessions, and the evaluation protocols.
//!
//! [`TrackRunner`] adapts a tracker — optionally wrapped in an
//! [`AttackSession`] — to the [`SequenceTracker`] driver interface the
//! protocols consume. It owns the per-sequence tracker state, applies the
//! session's template hook at (re-)initialization and its per-frame hook
//! before every step, pastes region-space masks into frame space, surfaces
//! perturbation diagnostics, and enforces an optional wall-clock budget so a
//! stalled configuration skips cleanly instead of wedging a whole run.

use std::time::{Duration, Instant};

use crate::attacks::{AttackSession, PerturbationMap, StepAttack};
use crate::error::{Error, Result};
use crate::eval::{SequenceTracker, StepOutput};
use crate::img::{self, image_dims};
use crate::metrics::PerturbDiagnostics;
use crate::synth::SequenceRecord;
use crate::trackers::{AnyTracker, Tracker, TrackerOutput, TrackerState};

/// Receives every attacked step's perturbation map, in frame order. The CLI
/// feeds these into a running checksum; tests collect them.
pub type PerturbationSink<'s> = Box<dyn FnMut(&PerturbationMap) + 's>;

/// Drives one tracker over sequences, with or without an attack in the loop.
///
/// One runner holds one sequence's mutable state at a time; `begin` resets it
/// (and restarts the wall-clock budget), so a single runner can be reused
/// across re-initializations and across sequences.
pub struct TrackRunner<'a> {
    tracker: &'a AnyTracker,
    session: Option<AttackSession>,
    state: Option<TrackerState>,
    sink: Option<PerturbationSink<'a>>,
    budget: Option<Duration>,
    started: Instant,
    frames_stepped: usize,
    diags: Vec<PerturbDiagnostics>,
}

impl<'a> TrackRunner<'a> {
    /// A clean (unattacked) runner.
    pub fn clean(tracker: &'a AnyTracker) -> Self {
        TrackRunner {
            tracker,
            session: None,
            state: None,
            sink: None,
            budget: None,
            started: Instant::now(),
            frames_stepped: 0,
            diags: Vec::new(),
        }
    }

    /// A runner with an attack session in the loop.
    pub fn attacked(tracker: &'a AnyTracker, session: AttackSession) -> Self {
        TrackRunner {
            session: Some(session),
            ..TrackRunner::clean(tracker)
        }
    }

    /// Stream every attacked step's perturbation map into `sink`.
    pub fn with_sink(mut self, sink: PerturbationSink<'a>) -> Self {
        self.sink = Some(sink);
        self
    }

    /// Abandon any sequence whose tracking loop runs longer than `budget`.
    pub fn with_budget(mut self, budget: Duration) -> Self {
        self.budget = Some(budget);
        self
    }

    /// The attack session, when this runner carries one.
    pub fn session(&self) -> Option<&AttackSession> {
        self.session.as_ref()
    }

    /// The tracker's prediction state, once `begin` has run.
    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    /// Per-step perturbation diagnostics accumulated since the last drain,
    /// in step order across `begin` boundaries. Protocols that do not carry
    /// diagnostics themselves (the re-initializing one) read them here.
    pub fn drain_diagnostics(&mut self) -> Vec<PerturbDiagnostics> {
        std::mem::take(&mut self.diags)
    }

    fn check_budget(&self) -> Result<()> {
        if let Some(budget) = self.budget {
            if self.started.elapsed() > budget {
                return Err(Error::Timeout {
                    budget_s: budget.as_secs_f64(),
                    frames: self.frames_stepped,
                });
            }
        }
        Ok(())
    }

    fn finish(&mut self, frame: &crate::img::Image, out: TrackerOutput, diag: Option<PerturbDiagnostics>) -> Result<StepOutput> {
        let (h, w) = image_dims(frame)?;
        let mask = out
            .mask
            .as_ref()
            .map(|m| img::paste_region_mask(m, &out.search_mapping, w, h));
        Ok(StepOutput {
            bbox: out.bbox,
            mask,
            diag,
        })
    }
}

impl SequenceTracker for TrackRunner<'_> {
    fn begin(&mut self, seq: &SequenceRecord, frame_idx: usize) -> Result<()> {
        self.started = Instant::now();
        self.frames_stepped = 0;
        let frame = &seq.frames[frame_idx];
        let bbox = &seq.gt_boxes[frame_idx];
        let tmpl = self.tracker.template_crop(frame, bbox)?;
        let tmpl = match &mut self.session {
            Some(session) => session.perturb_template(frame, bbox, &tmpl)?,
            None => tmpl,
        };
        self.state = Some(self.tracker.init_from_template(&tmpl, bbox)?);
        Ok(())
    }

    fn step(&mut self, seq: &SequenceRecord, frame_idx: usize) -> Result<StepOutput> {
        self.check_budget()?;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::State("step called before begin".into()))?;
        let frame = &seq.frames[frame_idx];
        self.frames_stepped += 1;

        let Some(session) = self.session.as_mut() else {
            let out = self.tracker.track(state, frame)?;
            return self.finish(frame, out, None);
        };

        let stepped = session.attack_step(self.tracker, state, frame)?;
        let result = stepped.result();
        if let Some(sink) = self.sink.as_mut() {
            sink(&result.perturbation);
        }
        let diag = PerturbDiagnostics::from_values(result.ssim, result.l1);
        self.diags.push(diag);
        let out = match &stepped {
            StepAttack::Search { region, .. } => {
                self.tracker
                    .track_from_search(state, region, image_dims(frame)?)?
            }
            StepAttack::Frame { image, .. } => self.tracker.track(state, image)?,
        };
        self.finish(frame, out, Some(diag))
    }
}
