//! Adversarial attacks against the toy trackers.
//!
//! Four families, two threat models:
//!
//! * [`rtaa`] — white-box search-region attack: ascends the gap between the
//!   tracker's loss on its own predicted labels and on adversarially
//!   manipulated ones, carrying the previous frame's perturbation forward.
//! * [`spark`] — white-box search-region attack optimizing an incremental
//!   perturbation on top of the summed history of previous increments, with
//!   an L2 penalty that keeps each increment sparse.
//! * [`iou`] — black-box whole-frame attack: walks seeded noise directions
//!   and keeps only steps that strictly lower a weighted IoU score, under a
//!   hard L1 budget.
//! * [`csa`] — cooling-shrinking attack: descends margin losses through a
//!   differentiable surrogate and transfers the resulting template/search
//!   perturbations to the target tracker.
//!
//! [`AttackSession`] wires one family into a per-sequence tracking loop. It
//! owns everything carried across frames (previous perturbation, increment
//! history, perturbed template features), derives one RNG stream per
//! (seed, sequence, frame), and enforces the applicability matrix up front.

pub mod csa;
pub mod iou;
pub mod rtaa;
pub mod spark;

pub use csa::{csa_attack, csa_losses, CsaState};
pub use iou::{iou_attack, iou_score};
pub use rtaa::{rtaa_attack, rtaa_manipulate_labels};
pub use spark::{spark_attack, spark_regularizer, SparkIterSnapshot};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::img::Image;
use crate::rng;
use crate::tensor::Tensor;
use crate::trackers::crop::RegionCrop;
use crate::trackers::siamcorr::{self, SiamCorr};
use crate::trackers::{AnyTracker, Capabilities, Tracker, TrackerState};

// ---------------------------------------------------------------------------
// Attack identifiers and applicability
// ---------------------------------------------------------------------------

/// The four attack families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackId {
    Rtaa,
    Spark,
    Iou,
    Csa,
}

/// Every attack id, in presentation order.
pub const ATTACK_IDS: [AttackId; 4] = [AttackId::Rtaa, AttackId::Spark, AttackId::Iou, AttackId::Csa];

impl AttackId {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackId::Rtaa => "rtaa",
            AttackId::Spark => "spark",
            AttackId::Iou => "iou",
            AttackId::Csa => "csa",
        }
    }
}

impl std::fmt::Display for AttackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AttackId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rtaa" => Ok(AttackId::Rtaa),
            "spark" => Ok(AttackId::Spark),
            "iou" => Ok(AttackId::Iou),
            "csa" => Ok(AttackId::Csa),
            other => Err(Error::Config(format!(
                "unknown attack id {other:?} (expected one of [\"rtaa\", \"spark\", \"iou\", \"csa\"])"
            ))),
        }
    }
}

/// Whether an attack perturbs the search-region crop or the whole frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackDomain {
    SearchRegion,
    WholeFrame,
}

/// Can `id` run against a tracker with these capabilities?
///
/// The white-box attacks need a scored candidate list to build loss labels
/// from, and a search-region crop to perturb. CSA needs both crop kinds but
/// no candidates (its gradients come from the surrogate). The IoU attack is
/// black-box over whole frames and runs against anything.
pub fn applicable(id: AttackId, caps: &Capabilities) -> bool {
    match id {
        AttackId::Rtaa | AttackId::Spark => caps.exposes_candidates && caps.has_search_region,
        AttackId::Iou => true,
        AttackId::Csa => caps.has_template_region && caps.has_search_region,
    }
}

/// [`applicable`] as a hard gate: inapplicable combinations come back as an
/// [`Error::Applicability`] naming both parties and the missing capability.
pub fn ensure_applicable(id: AttackId, tracker_id: &str, caps: &Capabilities) -> Result<()> {
    if applicable(id, caps) {
        return Ok(());
    }
    let reason = match id {
        AttackId::Rtaa | AttackId::Spark => {
            "the white-box loss needs a scored candidate list and a perturbable search region"
        }
        AttackId::Csa => "the transfer needs perturbable template and search regions",
        AttackId::Iou => unreachable!("the IoU attack is always applicable"),
    };
    Err(Error::Applicability {
        attack: id.as_str().to_string(),
        tracker: tracker_id.to_string(),
        reason: reason.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Shared knob set for all four attacks. Unused fields are ignored by the
/// families that do not need them (e.g. `zeta` outside the IoU attack).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Max-norm ball radius for projected perturbations, in pixel units.
    pub epsilon: f64,
    /// Gradient step size.
    pub alpha: f64,
    /// Iterations per frame for the gradient attacks.
    pub iters: usize,
    /// Sliding-window length for carried perturbation state; the carried
    /// state is also erased whenever the frame index is a multiple of this.
    pub history_window: usize,
    /// Weight of the increment-sparsity penalty in the SPARK loss.
    pub reg_lambda: f64,
    /// L1 budget for the IoU attack's whole-frame perturbation.
    pub zeta: f64,
    /// Weight blending spatial vs temporal overlap in the IoU score.
    pub iou_lambda: f64,
    /// Accepted-step limit for the IoU attack's normal phase.
    pub normal_steps: usize,
    /// Master seed; every (sequence, frame) derives its own stream from it.
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            epsilon: 10.2,
            alpha: 1.0,
            iters: 10,
            history_window: 30,
            reg_lambda: 1e-3,
            zeta: 10_000.0,
            iou_lambda: 0.5,
            normal_steps: 10,
            seed: 0,
        }
    }
}

impl AttackConfig {
    /// Default configuration tuned per attack family (step sizes differ).
    pub fn recommended(id: AttackId) -> Self {
        let mut cfg = AttackConfig::default();
        if id == AttackId::Spark {
            cfg.alpha = 0.3;
        }
        cfg
    }

    /// Validate the invariants every attack assumes.
    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Config(format!(
                "attack epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.iters < 1 {
            return Err(Error::Config("attack iters must be at least 1".into()));
        }
        if self.history_window < 1 {
            return Err(Error::Config("attack history_window must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_lambda) {
            return Err(Error::Config(format!(
                "iou_lambda must lie in [0, 1], got {}",
                self.iou_lambda
            )));
        }
        if self.zeta <= 0.0 {
            return Err(Error::Config(format!("zeta must be positive, got {}", self.zeta)));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Perturbations and results
// ---------------------------------------------------------------------------

/// A signed perturbation over search-region or frame extents, tagged with
/// the frame it was produced on.
#[derive(Clone, Debug)]
pub struct PerturbationMap {
    pub values: Tensor,
    pub frame_index: usize,
}

impl PerturbationMap {
    pub fn zeros(shape: &[usize], frame_index: usize) -> Self {
        PerturbationMap {
            values: Tensor::zeros(shape.to_vec()),
            frame_index,
        }
    }
}

/// Project a perturbation into the `[-epsilon, +epsilon]` max-norm ball,
/// elementwise.
pub fn epsilon_project(p: &PerturbationMap, epsilon: f64) -> PerturbationMap {
    debug_assert!(epsilon > 0.0, "epsilon_project wants a positive radius");
    PerturbationMap {
        values: clip_to_ball(&p.values, epsilon),
        frame_index: p.frame_index,
    }
}

/// Elementwise clamp to `[-radius, +radius]` — the tensor-level core of
/// [`epsilon_project`], reused by the attack loops.
pub fn clip_to_ball(values: &Tensor, radius: f64) -> Tensor {
    values.clamp(-radius, radius)
}

/// What one attacked frame produced: the adversarial pixels (search region
/// or whole frame depending on the attack's domain), the perturbation kept
/// for the next frame, similarity diagnostics, and the per-iteration (or
/// per-accepted-step) objective trace.
#[derive(Clone, Debug)]
pub struct AttackResult {
    pub adversarial_region_or_frame: Tensor,
    pub perturbation: PerturbationMap,
    pub ssim: f64,
    pub l1: f64,
    pub loss_trace: Vec<f64>,
}

/// One attacked step as consumed by the harness: either a perturbed search
/// crop (tracked via `track_from_search`) or a perturbed whole frame.
#[derive(Clone, Debug)]
pub enum StepAttack {
    Search { region: RegionCrop, result: AttackResult },
    Frame { image: Image, result: AttackResult },
}

impl StepAttack {
    pub fn result(&self) -> &AttackResult {
        match self {
            StepAttack::Search { result, .. } | StepAttack::Frame { result, .. } => result,
        }
    }
}

// ---------------------------------------------------------------------------
// Per-sequence session
// ---------------------------------------------------------------------------

/// Drives one attack family over one sequence.
///
/// The session validates the configuration and the tracker/attack pairing at
/// construction, then exposes two hooks for the tracking loop: template
/// perturbation at init (CSA only) and [`AttackSession::attack_step`] per
/// frame. All carried state — the previous perturbation map, the increment
/// history, the perturbed template features — lives here, as does the erasure
/// rule that drops carried state whenever the frame index is a multiple of
/// the history window.
#[derive(Debug)]
pub struct AttackSession {
    id: AttackId,
    cfg: AttackConfig,
    seq_index: u64,
    prev: Option<PerturbationMap>,
    history: Vec<PerturbationMap>,
    csa: Option<CsaState>,
    surrogate: Option<SiamCorr>,
    last_spark_iters: Vec<SparkIterSnapshot>,
    probe_failures: usize,
}

impl AttackSession {
    /// Build a session for `id` against `tracker`, failing fast on invalid
    /// configurations or inapplicable pairings. `seq_index` keys the RNG
    /// stream so sequences stay independent under parallel evaluation.
    pub fn new(id: AttackId, cfg: AttackConfig, tracker: &AnyTracker, seq_index: u64) -> Result<Self> {
        cfg.validate()?;
        ensure_applicable(id, tracker.id(), &tracker.capabilities())?;
        let surrogate = match id {
            AttackId::Csa => Some(SiamCorr::new(siamcorr::DEFAULT_WEIGHT_SEED)),
            _ => None,
        };
        Ok(AttackSession {
            id,
            cfg,
            seq_index,
            prev: None,
            history: Vec::new(),
            csa: None,
            surrogate,
            last_spark_iters: Vec::new(),
            probe_failures: 0,
        })
    }

    pub fn id(&self) -> AttackId {
        self.id
    }

    pub fn config(&self) -> &AttackConfig {
        &self.cfg
    }

    /// Which pixels this session's attack perturbs.
    pub fn domain(&self) -> AttackDomain {
        match self.id {
            AttackId::Iou => AttackDomain::WholeFrame,
            _ => AttackDomain::SearchRegion,
        }
    }

    /// Number of retained per-frame increments (diagnostics/tests).
    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Frame index the carried previous perturbation came from, if any.
    pub fn carried_from(&self) -> Option<usize> {
        self.prev.as_ref().map(|p| p.frame_index)
    }

    /// Probes the black-box attack had to skip because the tracker errored.
    pub fn probe_failures(&self) -> usize {
        self.probe_failures
    }

    /// Per-iteration snapshots of the most recent SPARK step.
    pub fn last_spark_iterations(&self) -> &[SparkIterSnapshot] {
        &self.last_spark_iters
    }

    fn frame_rng(&self, frame_index: usize, salt: &str) -> ChaCha8Rng {
        rng::stream(
            self.cfg.seed,
            &[
                rng::tag("attack"),
                rng::tag(self.id.as_str()),
                self.seq_index,
                frame_index as u64,
                rng::tag(salt),
            ],
        )
    }

    /// Template hook, called once between cropping and tracker init. Only
    /// CSA perturbs the template; every other attack returns it unchanged.
    pub fn perturb_template(
        &mut self,
        frame0: &Image,
        init_bbox: &BBox,
        tmpl: &RegionCrop,
    ) -> Result<RegionCrop> {
        if self.id != AttackId::Csa {
            return Ok(tmpl.clone());
        }
        let surrogate = self
            .surrogate
            .as_ref()
            .expect("CSA sessions always carry a surrogate");
        let (state, adv_pixels) = csa::init_template_attack(surrogate, frame0, init_bbox, tmpl, &self.cfg)?;
        self.csa = Some(state);
        Ok(RegionCrop {
            pixels: adv_pixels,
            mapping: tmpl.mapping,
        })
    }

    /// Attack the upcoming frame. `state` is the tracker's state *before*
    /// consuming the frame; the attacked frame's index is therefore
    /// `state.frame_index + 1`.
    pub fn attack_step(
        &mut self,
        tracker: &AnyTracker,
        state: &TrackerState,
        frame: &Image,
    ) -> Result<StepAttack> {
        let t = state.frame_index + 1;
        match self.id {
            AttackId::Rtaa => {
                if t % self.cfg.history_window == 0 {
                    self.prev = None;
                }
                let search = tracker.search_crop(frame, state)?;
                let prev = match &self.prev {
                    Some(p) => p.clone(),
                    None => PerturbationMap::zeros(search.pixels.shape(), t.saturating_sub(1)),
                };
                let mut rng = self.frame_rng(t, "labels");
                let result = rtaa::rtaa_attack(tracker, state, frame, &prev, &self.cfg, &mut rng)?;
                self.prev = Some(result.perturbation.clone());
                Ok(StepAttack::Search {
                    region: RegionCrop {
                        pixels: result.adversarial_region_or_frame.clone(),
                        mapping: search.mapping,
                    },
                    result,
                })
            }
            AttackId::Spark => {
                if t % self.cfg.history_window == 0 {
                    self.history.clear();
                }
                let search = tracker.search_crop(frame, state)?;
                let mut rng = self.frame_rng(t, "labels");
                let (result, iters) =
                    spark::spark_attack_traced(tracker, state, frame, &self.history, &self.cfg, &mut rng)?;
                self.last_spark_iters = iters;
                self.history.push(result.perturbation.clone());
                let overflow = self.history.len().saturating_sub(self.cfg.history_window);
                self.history.drain(..overflow);
                Ok(StepAttack::Search {
                    region: RegionCrop {
                        pixels: result.adversarial_region_or_frame.clone(),
                        mapping: search.mapping,
                    },
                    result,
                })
            }
            AttackId::Iou => {
                let mut rng = self.frame_rng(t, "noise");
                let result =
                    iou::iou_attack(tracker, state, frame, &self.cfg, &mut rng, &mut self.probe_failures)?;
                Ok(StepAttack::Frame {
                    image: result.adversarial_region_or_frame.clone(),
                    result,
                })
            }
            AttackId::Csa => {
                let surrogate = self
                    .surrogate
                    .as_ref()
                    .expect("CSA sessions always carry a surrogate");
                let csa_state = self.csa.as_ref().ok_or_else(|| {
                    Error::State("CSA session stepped before template initialization".into())
                })?;
                let search = tracker.search_crop(frame, state)?;
                let result = csa::csa_attack(surrogate, tracker, csa_state, state, frame, &self.cfg)?;
                Ok(StepAttack::Search {
                    region: RegionCrop {
                        pixels: result.adversarial_region_or_frame.clone(),
                        mapping: search.mapping,
                    },
                    result,
                })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Attack losses as checkable differentiable ops
// ---------------------------------------------------------------------------

/// Register the attack losses as scalar-output differentiable ops so the
/// gradient-check harness can probe the full pixels-to-loss chains:
///
/// * `rtaa_loss_search` — true-minus-manipulated tracking loss w.r.t. the
///   search crop.
/// * `spark_loss_search` — manipulated-minus-true loss plus the increment
///   penalty, w.r.t. the search crop.
/// * `csa_loss_search` — cooling + shrinking margins w.r.t. the search crop.
/// * `csa_loss_template` — the same margins w.r.t. the template crop.
///
/// Each op carries a frozen fixture (tracker, template, labels) so gradient
/// checks see exactly the tensors the attacks differentiate.
pub fn register_attack_losses(reg: &mut crate::grad::OpRegistry) -> Result<()> {
    use crate::grad::{DiffOp, GradientRecord};
    use crate::trackers::siamcorr::tracking_loss;
    use std::sync::Arc;

    let fx = Arc::new(LossFixture::build()?);

    let f = fx.clone();
    reg.register(
        "rtaa_loss_search",
        DiffOp {
            forward: Box::new({
                let f = f.clone();
                move |xs| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let lt = tracking_loss(&fwd, &f.truth)?;
                    let lm = tracking_loss(&fwd, &f.manip)?;
                    Ok(Tensor::new([1], vec![lt.loss - lm.loss])?)
                }
            }),
            vjp: Box::new({
                let f = f.clone();
                move |xs, up| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let lt = tracking_loss(&fwd, &f.truth)?;
                    let lm = tracking_loss(&fwd, &f.manip)?;
                    let dcls = lt.dcls_maps.sub(&lm.dcls_maps)?;
                    let dreg = lt.dreg_maps.sub(&lm.dreg_maps)?;
                    let g = f.sc.backprop_search(&fwd, &dcls, &dreg)?;
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: g.scale(up.data()[0]),
                    }])
                }
            }),
            sample: Box::new({
                let f = f.clone();
                move |r| vec![f.noisy_search(r)]
            }),
        },
    );

    let f = fx.clone();
    reg.register(
        "spark_loss_search",
        DiffOp {
            forward: Box::new({
                let f = f.clone();
                move |xs| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let lt = tracking_loss(&fwd, &f.truth)?;
                    let lm = tracking_loss(&fwd, &f.manip)?;
                    let inc = xs[0].sub(&f.search)?.sub(&f.accum)?;
                    let norm = inc.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                    Ok(Tensor::new([1], vec![lm.loss - lt.loss + SPARK_CHECK_LAMBDA * norm])?)
                }
            }),
            vjp: Box::new({
                let f = f.clone();
                move |xs, up| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let lt = tracking_loss(&fwd, &f.truth)?;
                    let lm = tracking_loss(&fwd, &f.manip)?;
                    let dcls = lm.dcls_maps.sub(&lt.dcls_maps)?;
                    let dreg = lm.dreg_maps.sub(&lt.dreg_maps)?;
                    let mut g = f.sc.backprop_search(&fwd, &dcls, &dreg)?;
                    let inc = xs[0].sub(&f.search)?.sub(&f.accum)?;
                    let norm = inc.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        g = g.zip_map(&inc, |gv, iv| gv + SPARK_CHECK_LAMBDA * iv / norm)?;
                    }
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: g.scale(up.data()[0]),
                    }])
                }
            }),
            sample: Box::new({
                let f = f.clone();
                move |r| vec![f.noisy_search(r)]
            }),
        },
    );

    let f = fx.clone();
    reg.register(
        "csa_loss_search",
        DiffOp {
            forward: Box::new({
                let f = f.clone();
                move |xs| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let (lc, ls) = csa::csa_losses(&fwd.candidates, csa::DEFAULT_MARGINS, csa::POSITIVE_SET)?;
                    Ok(Tensor::new([1], vec![lc + ls])?)
                }
            }),
            vjp: Box::new({
                let f = f.clone();
                move |xs, up| {
                    let fwd = f.sc.forward_search(&xs[0], &f.template_feats)?;
                    let grads = csa::csa_losses_grad(&fwd.candidates, csa::DEFAULT_MARGINS, csa::POSITIVE_SET)?;
                    let g = f.sc.backprop_search(&fwd, &grads.dcls_maps, &grads.dreg_maps)?;
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: g.scale(up.data()[0]),
                    }])
                }
            }),
            sample: Box::new({
                let f = f.clone();
                move |r| vec![f.noisy_search(r)]
            }),
        },
    );

    let f = fx;
    reg.register(
        "csa_loss_template",
        DiffOp {
            forward: Box::new({
                let f = f.clone();
                move |xs| {
                    let trace = f.sc.forward_template(&xs[0])?;
                    let fwd = f.sc.forward_search(&f.search, &trace.feats)?;
                    let (lc, ls) = csa::csa_losses(&fwd.candidates, csa::DEFAULT_MARGINS, csa::POSITIVE_SET)?;
                    Ok(Tensor::new([1], vec![lc + ls])?)
                }
            }),
            vjp: Box::new({
                let f = f.clone();
                move |xs, up| {
                    let trace = f.sc.forward_template(&xs[0])?;
                    let fwd = f.sc.forward_search(&f.search, &trace.feats)?;
                    let grads = csa::csa_losses_grad(&fwd.candidates, csa::DEFAULT_MARGINS, csa::POSITIVE_SET)?;
                    let (_dsearch, dtemplate) =
                        f.sc.backprop(&trace, &fwd, &grads.dcls_maps, &grads.dreg_maps)?;
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: dtemplate.scale(up.data()[0]),
                    }])
                }
            }),
            sample: Box::new({
                let f = f.clone();
                move |r| vec![f.noisy_template(r)]
            }),
        },
    );

    Ok(())
}

/// Penalty weight used by the registered `spark_loss_search` op (matches the
/// default `reg_lambda`).
const SPARK_CHECK_LAMBDA: f64 = 1e-3;

/// Frozen evaluation context for the registered attack losses: one tracker,
/// one synthetic scene, one template, one label pair.
struct LossFixture {
    sc: SiamCorr,
    template_feats: Tensor,
    template_pixels: Tensor,
    search: Tensor,
    accum: Tensor,
    truth: siamcorr::SiamLabels,
    manip: siamcorr::SiamLabels,
}

impl LossFixture {
    fn build() -> Result<Self> {
        use crate::synth;

        let spec = synth::SequenceSpec {
            name: "attack-loss-fixture".into(),
            seed: 414,
            frames: 2,
            ..Default::default()
        };
        let rec = synth::generate(&spec)?;
        let sc = SiamCorr::new(siamcorr::DEFAULT_WEIGHT_SEED);
        let state = sc.init(&rec.frames[0], &rec.gt_boxes[0])?;
        let tmpl = sc.template_crop(&rec.frames[0], &rec.gt_boxes[0])?;
        let search = sc.search_crop(&rec.frames[1], &state)?;

        let fwd = sc.forward_search(&search.pixels, &state.template_features)?;
        let best = fwd.candidates[siamcorr::argmax_candidate(&fwd.candidates)].clone();
        let (truth, manip) = rtaa::label_pair(&best, 3.0, 0.7)?;

        // A frozen stand-in for the summed increment history; mid-scale so
        // the increment norm is healthy at every sampled point.
        let mut r = rng::stream(414, &[rng::tag("attack-loss-accum")]);
        let accum = Tensor::rand_uniform(search.pixels.shape().to_vec(), -4.0, 4.0, &mut r);

        Ok(LossFixture {
            template_feats: state.template_features.clone(),
            template_pixels: tmpl.pixels,
            search: search.pixels,
            accum,
            truth,
            manip,
            sc,
        })
    }

    /// Search-crop sample: the fixture crop plus mid-scale noise. Synthetic
    /// pixel values sit well inside [0, 255], so no clamping (and thus no
    /// gradient kinks) is needed here.
    fn noisy_search(&self, r: &mut ChaCha8Rng) -> Tensor {
        let noise = Tensor::rand_uniform(self.search.shape().to_vec(), -6.0, 6.0, r);
        self.search.add(&noise).expect("same shape")
    }

    /// Template-crop sample, same construction as [`Self::noisy_search`].
    fn noisy_template(&self, r: &mut ChaCha8Rng) -> Tensor {
        let noise = Tensor::rand_uniform(self.template_pixels.shape().to_vec(), -6.0, 6.0, r);
        self.template_pixels.add(&noise).expect("same shape")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn epsilon_project_matches_elementwise_oracle() {
        // Interior point: unchanged.
        let interior = PerturbationMap {
            values: Tensor::new([4], vec![1.0, -2.0, 0.0, 9.9]).unwrap(),
            frame_index: 3,
        };
        let out = epsilon_project(&interior, 10.2);
        assert_eq!(out.values.data(), interior.values.data());
        assert_eq!(out.frame_index, 3);

        // Boundary clamp.
        let big = PerturbationMap {
            values: Tensor::new([1], vec![100.0]).unwrap(),
            frame_index: 0,
        };
        assert_eq!(epsilon_project(&big, 10.2).values.data(), &[10.2]);

        // Mixed tensor against a manual min/max oracle.
        let mut r = rng::stream(7, &[rng::tag("eps-project-test")]);
        let vals: Vec<f64> = (0..64).map(|_| r.gen_range(-30.0..30.0)).collect();
        let p = PerturbationMap {
            values: Tensor::new([64], vals.clone()).unwrap(),
            frame_index: 1,
        };
        let eps = 5.1;
        let projected = epsilon_project(&p, eps);
        for (got, want) in projected.values.data().iter().zip(vals.iter().map(|v| v.min(eps).max(-eps))) {
            assert_eq!(*got, want);
        }
    }

    #[test]
    fn config_validation_enforces_invariants() {
        assert!(AttackConfig::default().validate().is_ok());
        for id in ATTACK_IDS {
            assert!(AttackConfig::recommended(id).validate().is_ok());
        }

        let bad = [
            AttackConfig { epsilon: 0.0, ..Default::default() },
            AttackConfig { epsilon: -1.0, ..Default::default() },
            AttackConfig { iters: 0, ..Default::default() },
            AttackConfig { history_window: 0, ..Default::default() },
            AttackConfig { iou_lambda: 1.5, ..Default::default() },
            AttackConfig { iou_lambda: -0.1, ..Default::default() },
            AttackConfig { zeta: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?} should fail");
        }
    }

    #[test]
    fn attack_id_parse_roundtrip_and_unknown() {
        for id in ATTACK_IDS {
            let parsed: AttackId = id.as_str().parse().unwrap();
            assert_eq!(parsed, id);
        }
        let err = "gan".parse::<AttackId>().unwrap_err();
        assert!(err.to_string().contains("rtaa"), "error should list valid ids: {err}");
    }

    #[test]
    fn applicability_matrix_by_capability_row() {
        let siamcorr = AnyTracker::from_id_default("siamcorr").unwrap().capabilities();
        let tinyformer = AnyTracker::from_id_default("tinyformer").unwrap().capabilities();

        assert!(applicable(AttackId::Rtaa, &siamcorr));
        assert!(applicable(AttackId::Spark, &siamcorr));
        assert!(applicable(AttackId::Iou, &siamcorr));
        assert!(applicable(AttackId::Csa, &siamcorr));

        assert!(!applicable(AttackId::Rtaa, &tinyformer));
        assert!(!applicable(AttackId::Spark, &tinyformer));
        assert!(applicable(AttackId::Iou, &tinyformer));
        assert!(applicable(AttackId::Csa, &tinyformer));
    }

    #[test]
    fn session_rejects_inapplicable_pairing() {
        let tf = AnyTracker::from_id_default("tinyformer").unwrap();
        let err = AttackSession::new(AttackId::Spark, AttackConfig::default(), &tf, 0).unwrap_err();
        match &err {
            Error::Applicability { attack, tracker, .. } => {
                assert_eq!(attack, "spark");
                assert_eq!(tracker, "tinyformer");
            }
            other => panic!("expected applicability error, got {other:?}"),
        }
        assert!(err.to_string().contains("Table 1"), "error should cite the matrix: {err}");
    }

    #[test]
    fn registered_attack_losses_forward_and_vjp_agree_on_shape() {
        let mut reg = crate::grad::OpRegistry::standard();
        register_attack_losses(&mut reg).unwrap();
        for name in ["rtaa_loss_search", "spark_loss_search", "csa_loss_search", "csa_loss_template"] {
            assert!(reg.contains(name), "{name} missing from registry");
            let mut r = rng::stream(3, &[rng::tag(name)]);
            let point = reg.sample_point(name, &mut r).unwrap();
            // One cheap structural check per op; the precision gate lives in
            // the dedicated gradient-check harness.
            let report = reg.grad_check(name, &point, 1e-3, 1e-4).unwrap();
            assert!(report.pass, "{name}: max rel err {}", report.max_rel_err);
        }
    }
}
