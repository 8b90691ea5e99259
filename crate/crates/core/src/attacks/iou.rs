//! Black-box whole-frame attack guided by an IoU score.
//!
//! The attack never touches gradients: it proposes seeded uniform noise
//! fields, probes the tracker on the perturbed frame (on a cloned state, so
//! the real state never advances), and keeps a proposal only when it helps.
//! Two phases per frame:
//!
//! 1. *Tangential*: proposals are kept when the prediction stays essentially
//!    unchanged — this piles up perturbation mass without losing the
//!    tracker.
//! 2. *Normal*: proposals are kept only when the weighted IoU score
//!    strictly decreases, up to `normal_steps` accepted steps.
//!
//! The total perturbation is re-projected to the L1 budget `zeta` before
//! every probe, and noise is confined to a window around the current
//! prediction so the budget concentrates where it can move the tracker.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AttackConfig, AttackResult, PerturbationMap};
use crate::error::Result;
use crate::eval::bbox_iou;
use crate::geom::BBox;
use crate::img::Image;
use crate::metrics;
use crate::tensor::Tensor;
use crate::trackers::{AnyTracker, Tracker, TrackerState};

/// Budgets at or below this are treated as "no budget": the attack returns
/// the clean frame untouched.
pub const ZETA_NEGLIGIBLE: f64 = 1e-6;
/// Proposal count for the tangential phase.
const TANGENTIAL_ATTEMPTS: usize = 10;
/// The normal phase may burn this many proposals per accepted step before
/// giving up on the frame.
const NORMAL_ATTEMPT_FACTOR: usize = 5;
/// Noise window side as a multiple of the current prediction's larger
/// extent. Spreading the L1 budget over the whole frame dilutes it below
/// one gray level per pixel; a window this size keeps proposals dense
/// enough to move the tracker while still covering the search region.
const NOISE_WINDOW_FACTOR: f64 = 3.0;
/// Per-pixel amplitude scales for the two phases (multiplied by the current
/// score, so steps shrink as the attack succeeds).
const TANGENTIAL_AMP: f64 = 12.0;
const NORMAL_AMP: f64 = 20.0;
/// The score-driven noise level never drops below this.
const LEVEL_FLOOR: f64 = 0.05;
/// Tangential proposals must keep this much overlap with the pre-noise
/// prediction.
const TANGENTIAL_KEEP_IOU: f64 = 0.9;
/// Required margin for "strictly decreasing" score acceptances.
const MIN_DECREASE: f64 = 1e-12;

/// Weighted IoU score: `iou_lambda` times the overlap with the clean
/// prediction on this frame plus `1 − iou_lambda` times the overlap with the
/// previous frame's prediction.
pub fn iou_score(pred_noisy: &BBox, pred_init: &BBox, pred_prev: &BBox, iou_lambda: f64) -> f64 {
    debug_assert!(
        (0.0..=1.0).contains(&iou_lambda),
        "iou_lambda must be a convex weight"
    );
    iou_lambda * bbox_iou(pred_noisy, pred_init) + (1.0 - iou_lambda) * bbox_iou(pred_noisy, pred_prev)
}

/// Pixel window (x0..x1, y0..y1) around a box's center, clipped to frame.
fn noise_window(pred: &BBox, height: usize, width: usize) -> (usize, usize, usize, usize) {
    let half = NOISE_WINDOW_FACTOR * pred.w.max(pred.h) / 2.0;
    let x0 = (pred.cx() - half).floor().max(0.0) as usize;
    let y0 = (pred.cy() - half).floor().max(0.0) as usize;
    let x1 = ((pred.cx() + half).ceil() as usize).min(width);
    let y1 = ((pred.cy() + half).ceil() as usize).min(height);
    (x0, x1.max(x0 + 1).min(width), y0, y1.max(y0 + 1).min(height))
}

/// Uniform noise confined to the window, zero elsewhere. Channels and rows
/// are filled in fixed order so the stream stays reproducible.
fn sample_noise(
    shape: &[usize],
    window: (usize, usize, usize, usize),
    amp: f64,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let (x0, x1, y0, y1) = window;
    let (h, w) = (shape[1], shape[2]);
    let mut out = Tensor::zeros(shape.to_vec());
    let data = out.data_mut();
    for c in 0..shape[0] {
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                data[c * h * w + y * w + x] = rng.gen_range(-amp..amp);
            }
        }
    }
    out
}

/// Radially rescale a perturbation onto the L1 ball of radius `zeta` (a
/// no-op for perturbations already inside).
fn project_l1(pert: &Tensor, zeta: f64) -> Tensor {
    let l1: f64 = pert.data().iter().map(|v| v.abs()).sum();
    if l1 > zeta {
        pert.scale(zeta / l1)
    } else {
        pert.clone()
    }
}

/// Attack the upcoming frame with score-guided random noise.
///
/// Probes run the real tracker on a cloned state; a probe that errors is
/// skipped and counted in `probe_failures`. The final perturbation satisfies
/// `l1 ≤ zeta` (pixel-range clamping only ever shrinks it further) and the
/// returned `loss_trace` holds the accepted, strictly decreasing score
/// values.
pub fn iou_attack(
    tracker: &AnyTracker,
    state: &TrackerState,
    frame: &Image,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
    probe_failures: &mut usize,
) -> Result<AttackResult> {
    let clean = frame.clone();
    let t = state.frame_index + 1;
    if cfg.zeta <= ZETA_NEGLIGIBLE {
        let ssim = metrics::ssim(&clean, &clean)?;
        return Ok(AttackResult {
            adversarial_region_or_frame: clean.clone(),
            perturbation: PerturbationMap::zeros(clean.shape(), t),
            ssim,
            l1: 0.0,
            loss_trace: Vec::new(),
        });
    }

    let probe = |pixels: &Tensor| -> Result<BBox> {
        let img = pixels.clamp(0.0, 255.0);
        let mut scratch = state.clone();
        Ok(tracker.track(&mut scratch, &img)?.bbox)
    };

    // Baselines: the clean prediction on this frame anchors the spatial
    // term, the previous frame's prediction anchors the temporal term.
    let pred_init = probe(&clean)?;
    let pred_prev = state.last_bbox;
    let (h, w) = (clean.dim(1), clean.dim(2));

    let mut pert = Tensor::zeros(clean.shape().to_vec());
    let mut cur_pred = pred_init;
    let mut score = iou_score(&cur_pred, &pred_init, &pred_prev, cfg.iou_lambda);

    // Tangential phase: grow the perturbation while the prediction holds.
    for _ in 0..TANGENTIAL_ATTEMPTS {
        let amp = TANGENTIAL_AMP * score.max(LEVEL_FLOOR);
        let noise = sample_noise(clean.shape(), noise_window(&cur_pred, h, w), amp, rng);
        let cand = project_l1(&pert.add(&noise)?, cfg.zeta);
        match probe(&clean.add(&cand)?) {
            Err(_) => *probe_failures += 1,
            Ok(p) => {
                if bbox_iou(&p, &cur_pred) > TANGENTIAL_KEEP_IOU {
                    pert = cand;
                    cur_pred = p;
                    score = iou_score(&cur_pred, &pred_init, &pred_prev, cfg.iou_lambda);
                }
            }
        }
    }

    // Normal phase: only strict score decreases are kept.
    let mut trace = Vec::new();
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < cfg.normal_steps && attempts < cfg.normal_steps * NORMAL_ATTEMPT_FACTOR {
        attempts += 1;
        let amp = NORMAL_AMP * score.max(LEVEL_FLOOR);
        let noise = sample_noise(clean.shape(), noise_window(&cur_pred, h, w), amp, rng);
        let cand = project_l1(&pert.add(&noise)?, cfg.zeta);
        match probe(&clean.add(&cand)?) {
            Err(_) => *probe_failures += 1,
            Ok(p) => {
                let new_score = iou_score(&p, &pred_init, &pred_prev, cfg.iou_lambda);
                if new_score < score - MIN_DECREASE {
                    pert = cand;
                    cur_pred = p;
                    score = new_score;
                    accepted += 1;
                    trace.push(new_score);
                }
            }
        }
    }

    let adv = clean.add(&pert)?.clamp(0.0, 255.0);
    let final_pert = adv.sub(&clean)?;
    let ssim = metrics::ssim(&clean, &adv)?;
    let l1 = metrics::l1_norm(&final_pert);
    Ok(AttackResult {
        adversarial_region_or_frame: adv,
        perturbation: PerturbationMap {
            values: final_pert,
            frame_index: t,
        },
        ssim,
        l1,
        loss_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::synth;

    #[test]
    fn score_is_the_convex_blend_of_overlaps() {
        // IoU(noisy, init) = 16 / 20 = 0.8; IoU(noisy, prev) = 15 / 25 = 0.6.
        let noisy = BBox::new(0.0, 0.0, 4.0, 5.0);
        let init = BBox::new(0.0, 0.0, 4.0, 4.0);
        let prev = BBox::new(1.0, 0.0, 4.0, 5.0);

        assert!((bbox_iou(&noisy, &init) - 0.8).abs() < 1e-12);
        assert!((bbox_iou(&noisy, &prev) - 0.6).abs() < 1e-12);
        assert!((iou_score(&noisy, &init, &prev, 1.0) - 0.8).abs() < 1e-12);
        assert!((iou_score(&noisy, &init, &prev, 0.0) - 0.6).abs() < 1e-12);
        assert!((iou_score(&noisy, &init, &prev, 0.5) - 0.7).abs() < 1e-12);
    }

    fn fixture() -> (AnyTracker, TrackerState, synth::SequenceRecord) {
        let rec = synth::generate(&synth::SequenceSpec {
            name: "iou-test".into(),
            seed: 13,
            frames: 3,
            ..Default::default()
        })
        .unwrap();
        let tracker = AnyTracker::from_id_default("siamcorr").unwrap();
        let state = tracker.init(&rec.frames[0], &rec.gt_boxes[0]).unwrap();
        (tracker, state, rec)
    }

    #[test]
    fn negligible_budget_returns_clean_frame() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            zeta: 1e-9,
            ..Default::default()
        };
        let mut failures = 0;
        let mut r = rng::stream(1, &[rng::tag("iou-zero")]);
        let out = iou_attack(&tracker, &state, &rec.frames[1], &cfg, &mut r, &mut failures).unwrap();
        assert_eq!(out.adversarial_region_or_frame.data(), rec.frames[1].data());
        assert_eq!(out.l1, 0.0);
        assert!((out.ssim - 1.0).abs() < 1e-12);
        assert!(out.loss_trace.is_empty());
        assert_eq!(failures, 0);
    }

    #[test]
    fn budget_and_trace_invariants_hold_on_a_real_run() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig::default();
        let mut failures = 0;
        let mut r = rng::stream(2, &[rng::tag("iou-run")]);
        let out = iou_attack(&tracker, &state, &rec.frames[1], &cfg, &mut r, &mut failures).unwrap();

        assert!(out.l1 <= cfg.zeta + 1e-9, "L1 {} exceeds budget {}", out.l1, cfg.zeta);
        assert!(out
            .adversarial_region_or_frame
            .data()
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v)));
        for w in out.loss_trace.windows(2) {
            assert!(w[1] < w[0], "accepted scores must strictly decrease: {:?}", out.loss_trace);
        }
        assert_eq!(failures, 0, "the toy trackers never fail a probe on valid frames");
    }

    #[test]
    fn identical_streams_give_identical_attacks() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig::default();
        let mut f1 = 0;
        let mut f2 = 0;
        let mut r1 = rng::stream(7, &[rng::tag("iou-det")]);
        let mut r2 = rng::stream(7, &[rng::tag("iou-det")]);
        let a = iou_attack(&tracker, &state, &rec.frames[1], &cfg, &mut r1, &mut f1).unwrap();
        let b = iou_attack(&tracker, &state, &rec.frames[1], &cfg, &mut r2, &mut f2).unwrap();
        assert_eq!(a.adversarial_region_or_frame.data(), b.adversarial_region_or_frame.data());
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.l1, b.l1);
    }
}
