//! White-box search-region attack optimizing sparse per-frame increments.
//!
//! The attack keeps a sliding history of per-frame perturbation increments.
//! On each frame it sums the history into an accumulated map 𝒮, then runs a
//! signed-gradient descent on `loss(manipulated labels) − loss(true labels)`
//! plus an L2 penalty on the current increment, projecting every step into
//! the ε-ball. The returned frame composes the clean crop with the updated
//! increment sum, so perturbation mass rides along from frame to frame while
//! each new increment stays small.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::rtaa::{label_pair, OFFSET_LIMIT, SCALE_MAX, SCALE_MIN};
use super::{clip_to_ball, AttackConfig, AttackResult, PerturbationMap};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::metrics;
use crate::ops;
use crate::tensor::Tensor;
use crate::trackers::siamcorr::{argmax_candidate, tracking_loss};
use crate::trackers::{AnyTracker, Tracker, TrackerState};

/// Below this L2 norm the current increment is treated as zero and the
/// penalty contributes no gradient (its direction is undefined at the
/// origin).
const NORM_FLOOR: f64 = 1e-12;

/// One optimizer iteration, frozen for inspection: the probe image the
/// gradient was taken at (`before`), the updated adversarial image (`adv`),
/// the accumulated history sum (`accum`), and the updated increment
/// (`pert`). `pert = adv − before − accum` holds bit-exactly.
#[derive(Clone, Debug)]
pub struct SparkIterSnapshot {
    pub before: Tensor,
    pub adv: Tensor,
    pub accum: Tensor,
    pub pert: Tensor,
}

/// Sparsity penalty over a window of increments: `reg_lambda` times the sum
/// of per-frame L2 norms (one norm per increment, summed — small on windows
/// where most frames carry nothing).
pub fn spark_regularizer(gamma: &[PerturbationMap], reg_lambda: f64) -> f64 {
    reg_lambda
        * gamma
            .iter()
            .map(|p| p.values.data().iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum::<f64>()
}

/// [`spark_attack`] plus per-iteration snapshots (used by tests and the
/// acceptance gate to audit the update identity and erasure schedule).
pub fn spark_attack_traced(
    tracker: &AnyTracker,
    state: &TrackerState,
    frame: &Image,
    history: &[PerturbationMap],
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(AttackResult, Vec<SparkIterSnapshot>)> {
    let sc = tracker.as_siamcorr().ok_or_else(|| Error::Applicability {
        attack: "spark".to_string(),
        tracker: tracker.id().to_string(),
        reason: "the white-box loss needs a scored candidate list and a perturbable search region"
            .to_string(),
    })?;
    if history.len() > cfg.history_window {
        return Err(Error::Config(format!(
            "increment history holds {} maps, window is {}",
            history.len(),
            cfg.history_window
        )));
    }

    let search = tracker.search_crop(frame, state)?;
    let clean = search.pixels;
    for m in history {
        if m.values.shape() != clean.shape() {
            return Err(Error::shape(
                "spark_attack",
                format!("history map is {:?}, search crop is {:?}", m.values.shape(), clean.shape()),
            ));
        }
    }

    // Accumulated increment sum and the history part of the penalty, both
    // constant across the iteration loop.
    let mut accum = Tensor::zeros(clean.shape().to_vec());
    for m in history {
        accum = accum.add(&m.values)?;
    }
    let history_penalty = spark_regularizer(history, cfg.reg_lambda);

    // Frozen per-frame labels, same construction as the sibling attack but
    // drawn from this attack's own stream.
    let clean_fwd = sc.forward_search(&clean, &state.template_features)?;
    let best = clean_fwd.candidates[argmax_candidate(&clean_fwd.candidates)].clone();
    let delta_offset = rng.gen_range(-OFFSET_LIMIT..=OFFSET_LIMIT);
    let delta_scale = rng.gen_range(SCALE_MIN..=SCALE_MAX);
    let (truth, manip) = label_pair(&best, delta_offset, delta_scale)?;

    // The optimizer probes a composed image that re-adds `accum` on top of
    // the previous iterate each round; that probe trajectory is discarded
    // below — only the increment it settles on is kept, and the returned
    // frame is always `clean + updated sum`.
    let mut adv = clean.clone();
    let mut pert = match history.last() {
        Some(m) => m.values.clone(),
        None => Tensor::zeros(clean.shape().to_vec()),
    };
    let mut trace = Vec::with_capacity(cfg.iters);
    let mut snapshots = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let before = adv.clone();
        let fwd = sc.forward_search(&before, &state.template_features)?;
        let lt = tracking_loss(&fwd, &truth)?;
        let lm = tracking_loss(&fwd, &manip)?;

        let current = before.sub(&clean)?.sub(&accum)?;
        let norm = current.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        trace.push(lm.loss - lt.loss + history_penalty + cfg.reg_lambda * norm);

        let dcls = lm.dcls_maps.sub(&lt.dcls_maps)?;
        let dreg = lm.dreg_maps.sub(&lt.dreg_maps)?;
        let mut grad = sc.backprop_search(&fwd, &dcls, &dreg)?;
        if norm > NORM_FLOOR {
            grad = grad.zip_map(&current, |g, c| g + cfg.reg_lambda * c / norm)?;
        }

        let stepped = pert.zip_map(&grad, |p, g| p - cfg.alpha * ops::sign(g))?;
        let projected = clip_to_ball(&stepped, cfg.epsilon);
        adv = before.add(&projected)?.add(&accum)?.clamp(0.0, 255.0);
        pert = adv.sub(&before)?.sub(&accum)?;
        snapshots.push(SparkIterSnapshot {
            before,
            adv: adv.clone(),
            accum: accum.clone(),
            pert: pert.clone(),
        });
    }

    // Updated increment sum over the trailing window, now including the new
    // increment; the frame handed to the tracker is its composition with the
    // clean crop, pinned to the pixel range.
    let mut window: Vec<&Tensor> = history.iter().map(|m| &m.values).collect();
    window.push(&pert);
    let start = window.len().saturating_sub(cfg.history_window);
    let mut updated_sum = Tensor::zeros(clean.shape().to_vec());
    for m in &window[start..] {
        updated_sum = updated_sum.add(m)?;
    }
    let final_adv = clean.add(&updated_sum)?.clamp(0.0, 255.0);

    let ssim = metrics::ssim(&clean, &final_adv)?;
    let l1 = metrics::l1_norm(&pert);
    Ok((
        AttackResult {
            adversarial_region_or_frame: final_adv,
            perturbation: PerturbationMap {
                values: pert,
                frame_index: state.frame_index + 1,
            },
            ssim,
            l1,
            loss_trace: trace,
        },
        snapshots,
    ))
}

/// Attack the upcoming frame's search region; see [`spark_attack_traced`].
pub fn spark_attack(
    tracker: &AnyTracker,
    state: &TrackerState,
    frame: &Image,
    history: &[PerturbationMap],
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AttackResult> {
    Ok(spark_attack_traced(tracker, state, frame, history, cfg, rng)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::synth;

    #[test]
    fn regularizer_closed_forms() {
        assert_eq!(spark_regularizer(&[], 1.0), 0.0);

        let n = 48;
        let ones = PerturbationMap {
            values: Tensor::full([n], 1.0),
            frame_index: 0,
        };
        let got = spark_regularizer(std::slice::from_ref(&ones), 1.0);
        assert!((got - (n as f64).sqrt()).abs() < 1e-12);

        // Homogeneity: scaling every entry by c scales the result by |c|.
        let mut r = rng::stream(3, &[rng::tag("spark-reg-test")]);
        let maps: Vec<PerturbationMap> = (0..4)
            .map(|i| PerturbationMap {
                values: Tensor::rand_uniform([17], -2.0, 2.0, &mut r),
                frame_index: i,
            })
            .collect();
        let base = spark_regularizer(&maps, 0.7);
        let scaled: Vec<PerturbationMap> = maps
            .iter()
            .map(|m| PerturbationMap {
                values: m.values.scale(-3.0),
                frame_index: m.frame_index,
            })
            .collect();
        let got = spark_regularizer(&scaled, 0.7);
        assert!((got - 3.0 * base).abs() < 1e-9 * base.max(1.0));
    }

    fn fixture() -> (AnyTracker, TrackerState, synth::SequenceRecord) {
        let rec = synth::generate(&synth::SequenceSpec {
            name: "spark-test".into(),
            seed: 12,
            frames: 3,
            ..Default::default()
        })
        .unwrap();
        let tracker = AnyTracker::from_id_default("siamcorr").unwrap();
        let state = tracker.init(&rec.frames[0], &rec.gt_boxes[0]).unwrap();
        (tracker, state, rec)
    }

    #[test]
    fn empty_history_zero_step_is_identity() {
        // alpha = 0 makes the signed step vanish (same algebra as a zero
        // gradient); with no history the increment stays zero and the
        // returned frame is exactly the clean crop.
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            alpha: 0.0,
            iters: 3,
            ..AttackConfig::recommended(crate::attacks::AttackId::Spark)
        };
        let mut r = rng::stream(4, &[rng::tag("spark-identity")]);
        let out = spark_attack(&tracker, &state, &rec.frames[1], &[], &cfg, &mut r).unwrap();

        let search = tracker.search_crop(&rec.frames[1], &state).unwrap();
        assert_eq!(out.adversarial_region_or_frame.data(), search.pixels.data());
        assert!(out.perturbation.values.data().iter().all(|&v| v == 0.0));
        assert_eq!(out.l1, 0.0);
        assert!((out.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn update_identity_holds_bit_exactly_each_iteration() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig::recommended(crate::attacks::AttackId::Spark);
        let history = vec![PerturbationMap {
            values: {
                let search = tracker.search_crop(&rec.frames[1], &state).unwrap();
                let mut r = rng::stream(8, &[rng::tag("spark-hist")]);
                Tensor::rand_uniform(search.pixels.shape().to_vec(), -3.0, 3.0, &mut r)
            },
            frame_index: 1,
        }];
        let mut r = rng::stream(8, &[rng::tag("spark-id-test")]);
        let (_, snaps) =
            spark_attack_traced(&tracker, &state, &rec.frames[1], &history, &cfg, &mut r).unwrap();
        assert_eq!(snaps.len(), cfg.iters);
        for s in &snaps {
            let recomputed = s.adv.sub(&s.before).unwrap().sub(&s.accum).unwrap();
            assert_eq!(recomputed.data(), s.pert.data(), "update identity must be bit-exact");
        }
    }

    #[test]
    fn empty_history_increment_stays_inside_ball() {
        // With no accumulated history the pixel-range clamp can only shrink
        // the projected step, so the returned increment never leaves the
        // ball.
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            epsilon: 5.1,
            iters: 3,
            ..AttackConfig::recommended(crate::attacks::AttackId::Spark)
        };
        let mut r = rng::stream(2, &[rng::tag("spark-ball")]);
        let out = spark_attack(&tracker, &state, &rec.frames[1], &[], &cfg, &mut r).unwrap();
        assert!(out.perturbation.values.max_abs() <= 5.1 + 1e-12);
        assert!(out
            .adversarial_region_or_frame
            .data()
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v)));
    }

    #[test]
    fn identical_streams_give_identical_attacks() {
        let (tracker, state, rec) = fixture();
        let cfg = AttackConfig {
            iters: 2,
            ..AttackConfig::recommended(crate::attacks::AttackId::Spark)
        };
        let mut r1 = rng::stream(6, &[rng::tag("spark-det")]);
        let mut r2 = rng::stream(6, &[rng::tag("spark-det")]);
        let a = spark_attack(&tracker, &state, &rec.frames[1], &[], &cfg, &mut r1).unwrap();
        let b = spark_attack(&tracker, &state, &rec.frames[1], &[], &cfg, &mut r2).unwrap();
        assert_eq!(a.adversarial_region_or_frame.data(), b.adversarial_region_or_frame.data());
        assert_eq!(a.perturbation.values.data(), b.perturbation.values.data());
        assert_eq!(a.loss_trace, b.loss_trace);
    }
}
