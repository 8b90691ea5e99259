//! White-box search-region attack driven by label manipulation.
//!
//! Per frame: probe the clean search crop once, take the tracker's own best
//! candidate as pseudo ground truth, then build a second label set whose box
//! is shifted and rescaled by per-frame random deltas and whose binary
//! classification targets are reversed. The attack ascends
//! `loss(true labels) − loss(manipulated labels)` by iterated signed
//! gradient steps, keeping the total perturbation inside the ε-ball around
//! the clean crop. Only the final perturbation map is carried to the next
//! frame.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{clip_to_ball, AttackConfig, AttackResult, PerturbationMap};
use crate::error::{Error, Result};
use crate::metrics;
use crate::ops;
use crate::img::Image;
use crate::trackers::siamcorr::{argmax_candidate, build_labels, tracking_loss, SiamLabels};
use crate::trackers::{AnyTracker, Candidate, Tracker, TrackerState};

/// Box-center shift is drawn from `[-OFFSET_LIMIT, +OFFSET_LIMIT]` pixels.
pub const OFFSET_LIMIT: f64 = 5.0;
/// Box-extent scale is drawn from `[SCALE_MIN, SCALE_MAX]`.
pub const SCALE_MIN: f64 = 0.5;
pub const SCALE_MAX: f64 = 2.0;

/// Shift, rescale, and label-reverse every candidate: `x* = x + δ_offset`,
/// `y* = y + δ_offset`, `w* = w·δ_scale`, `h* = h·δ_scale`, and the (binary)
/// classification label flips to its complement. Raw regression offsets are
/// left untouched — the manipulated box is the carrier of the change.
pub fn rtaa_manipulate_labels(
    candidates: &[Candidate],
    delta_offset: f64,
    delta_scale: f64,
) -> Vec<Candidate> {
    candidates
        .iter()
        .map(|c| Candidate {
            bbox: crate::geom::BBox::new(
                c.bbox.x + delta_offset,
                c.bbox.y + delta_offset,
                c.bbox.w * delta_scale,
                c.bbox.h * delta_scale,
            ),
            cls_score: 1.0 - c.cls_score,
            reg: c.reg,
        })
        .collect()
}

/// Anchor-grid label pair for one frame: truth labels built from the best
/// clean candidate, and manipulated labels built from its shifted/rescaled
/// twin with classification targets reversed. The manipulated positive set
/// is the complement of the truth positives, so descent on the manipulated
/// loss pushes score mass and regression toward background anchors.
pub(crate) fn label_pair(
    best: &Candidate,
    delta_offset: f64,
    delta_scale: f64,
) -> Result<(SiamLabels, SiamLabels)> {
    let truth = build_labels(&best.bbox)?;
    let twisted = rtaa_manipulate_labels(std::slice::from_ref(best), delta_offset, delta_scale);
    let manip_reg = build_labels(&twisted[0].bbox)?;
    let positives: Vec<usize> = (0..truth.cls.len()).filter(|&i| truth.cls[i] == 0.0).collect();
    if positives.is_empty() {
        return Err(Error::Degenerate(
            "label manipulation left no negative anchors to repurpose".into(),
        ));
    }
    let manip = SiamLabels {
        cls: truth.cls.iter().map(|c| 1.0 - c).collect(),
        reg: manip_reg.reg,
        positives,
    };
    Ok((truth, manip))
}

/// Attack the upcoming frame's search region.
///
/// `prev_pert` is the perturbation carried from the previous frame (a zero
/// map on the first attacked frame or right after an erasure); its extents
/// must match the search crop. `rng` is the per-(sequence, frame) stream
/// supplying the label-manipulation deltas.
///
/// Each iteration recomputes the loss gradient at the current adversarial
/// crop, takes a signed step on top of the running perturbation, projects to
/// the ε-ball, and re-composes against the *clean* crop, so the total
/// perturbation never leaves the ball and a vanishing gradient leaves the
/// adversarial crop fixed.
pub fn rtaa_attack(
    tracker: &AnyTracker,
    state: &TrackerState,
    frame: &Image,
    prev_pert: &PerturbationMap,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AttackResult> {
    let sc = tracker.as_siamcorr().ok_or_else(|| Error::Applicability {
        attack: "rtaa".to_string(),
        tracker: tracker.id().to_string(),
        reason: "the white-box loss needs a scored candidate list and a perturbable search region"
            .to_string(),
    })?;

    let search = tracker.search_crop(frame, state)?;
    let clean = search.pixels;
    if prev_pert.values.shape() != clean.shape() {
        return Err(Error::shape(
            "rtaa_attack",
            format!(
                "carried perturbation is {:?}, search crop is {:?}",
                prev_pert.values.shape(),
                clean.shape()
            ),
        ));
    }

    // Labels are frozen per frame: pseudo ground truth from the clean crop's
    // best candidate, manipulated twin from per-frame random deltas.
    let clean_fwd = sc.forward_search(&clean, &state.template_features)?;
    let best = clean_fwd.candidates[argmax_candidate(&clean_fwd.candidates)].clone();
    let delta_offset = rng.gen_range(-OFFSET_LIMIT..=OFFSET_LIMIT);
    let delta_scale = rng.gen_range(SCALE_MIN..=SCALE_MAX);
    let (truth, manip) = label_pair(&best, delta_offset, delta_scale)?;

    let mut adv = clean.clone();
    let mut pert = prev_pert.values.clone();
    let mut trace = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let fwd = sc.forward_search(&adv, &state.template_features)?;
        let lt = tracking_loss(&fwd, &truth)?;
        let lm = tracking_loss(&fwd, &manip)?;
        trace.push(lt.loss - lm.loss);

        let dcls = lt.dcls_maps.sub(&lm.dcls_maps)?;
        let dreg = lt.dreg_maps.sub(&lm.dreg_maps)?;
        let grad = sc.backprop_search(&fwd, &dcls, &dreg)?;

        let stepped = pert.zip_map(&grad, |p, g| p + cfg.alpha * ops::sign(g))?;
        let projected = clip_to_ball(&stepped, cfg.epsilon);
        adv = clean.add(&projected)?.clamp(0.0, 255.0);
        pert = adv.sub(&clean)?;
    }

    let ssim = metrics::ssim(&clean, &adv)?;
    let l1 = metrics::l1_norm(&pert);
    Ok(AttackResult {
        adversarial_region_or_frame: adv,
        perturbation: PerturbationMap {
            values: pert,
            frame_index: state.frame_index + 1,
        },
        ssim,
        l1,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::BBox;
    use crate::rng;
    use crate::synth;

    #[test]
    fn manipulate_labels_shifts_scales_and_reverses() {
        let cand = Candidate {
            bbox: BBox::new(10.0, 7.0, 4.0, 6.0),
            cls_score: 1.0,
            reg: [0.1, 0.2, 0.3, 0.4],
        };
        let out = rtaa_manipulate_labels(&[cand], 2.0, 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox.x, 12.0);
        assert_eq!(out[0].bbox.y, 9.0);
        assert_eq!(out[0].bbox.w, 2.0);
        assert_eq!(out[0].bbox.h, 3.0);
        assert_eq!(out[0].cls_score, 0.0);
        assert_eq!(out[0].reg, [0.1, 0.2, 0.3, 0.4]);
    }

    fn fixture() -> (AnyTracker, TrackerState, synth::SequenceRecord) {
        let rec = synth::generate(&synth::SequenceSpec {
            name: "rtaa-test".into(),
            seed: 11,
            frames: 3,
            ..Default::default()
        })
        .unwrap();
        let tracker = AnyTracker::from_id_default("siamcorr").unwrap();
        let state = tracker.init(&rec.frames[0], &rec.gt_boxes[0]).unwrap();
        (tracker, state, rec)
    }

    #[test]
    fn zero_step_size_reaches_clipped_carry_fixpoint() {
        // With alpha = 0 the signed-gradient term vanishes identically —
        // the same algebra as a constant loss — so every iteration lands on
        // adv = clamp(clean + clip(prev)) and stays there.
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            alpha: 0.0,
            iters: 4,
            epsilon: 10.2,
            ..Default::default()
        };
        let search = tracker.search_crop(&rec.frames[1], &state).unwrap();
        let prev = PerturbationMap {
            values: crate::tensor::Tensor::full(search.pixels.shape().to_vec(), 30.0),
            frame_index: 0,
        };
        let mut r = rng::stream(5, &[rng::tag("rtaa-fixpoint")]);
        let out = rtaa_attack(&tracker, &state, &rec.frames[1], &prev, &cfg, &mut r).unwrap();

        let expect = search.pixels.map(|v| (v + 10.2).min(255.0));
        assert_eq!(out.adversarial_region_or_frame.data(), expect.data());
        let expect_pert = expect.sub(&search.pixels).unwrap();
        assert_eq!(out.perturbation.values.data(), expect_pert.data());
        assert_eq!(out.loss_trace.len(), 4);
        // The first entry is evaluated at the still-clean crop; from the
        // second on, the crop never moves between iterations.
        for w in out.loss_trace[1..].windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn real_run_respects_ball_and_pixel_range() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            epsilon: 5.1,
            iters: 3,
            ..Default::default()
        };
        let mut r = rng::stream(5, &[rng::tag("rtaa-ball")]);
        let out = rtaa_attack(&tracker, &state, &rec.frames[1], &prev_zeros(&tracker, &state, &rec), &cfg, &mut r)
            .unwrap();

        assert!(out.perturbation.values.max_abs() <= 5.1 + 1e-12);
        assert!(out
            .adversarial_region_or_frame
            .data()
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v)));
        assert_eq!(out.loss_trace.len(), 3);
        assert!(out.ssim <= 1.0 && out.ssim > 0.0);
        assert!(out.l1 > 0.0, "a real gradient run should perturb something");
    }

    fn prev_zeros(tracker: &AnyTracker, state: &TrackerState, rec: &synth::SequenceRecord) -> PerturbationMap {
        let search = tracker.search_crop(&rec.frames[1], state).unwrap();
        PerturbationMap::zeros(search.pixels.shape(), 0)
    }

    #[test]
    fn identical_streams_give_identical_attacks() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig { iters: 2, ..Default::default() };
        let prev = prev_zeros(&tracker, &state, &rec);
        let mut r1 = rng::stream(9, &[rng::tag("rtaa-det")]);
        let mut r2 = rng::stream(9, &[rng::tag("rtaa-det")]);
        let a = rtaa_attack(&tracker, &state, &rec.frames[1], &prev, &cfg, &mut r1).unwrap();
        let b = rtaa_attack(&tracker, &state, &rec.frames[1], &prev, &cfg, &mut r2).unwrap();
        assert_eq!(a.adversarial_region_or_frame.data(), b.adversarial_region_or_frame.data());
        assert_eq!(a.perturbation.values.data(), b.perturbation.values.data());
        assert_eq!(a.loss_trace, b.loss_trace);
    }
}
