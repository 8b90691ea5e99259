//! Tracker-facing types shared by both built-in trackers, plus the dispatch
//! enum the harness and CLI use to select one by id.
//!
//! Both trackers follow the same two-phase shape: a template crop taken once
//! at initialization, and a search crop taken around the previous prediction
//! on every subsequent frame. Attacks that need pixel gradients drive the
//! crop-level entry points (`init_from_template`, `track_from_search`)
//! directly; plain evaluation uses the frame-level `init`/`track` wrappers.

use crate::geom::{BBox, RegionMapping};
use crate::img::{image_dims, BinaryMap, Image};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub mod blocks;
pub mod crop;
pub mod siamcorr;
pub mod tinyformer;

use crop::RegionCrop;

/// Capability flags that decide which attack families may target a tracker.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    /// Tracker emits a scored candidate list (required by the label-manipulation attacks).
    pub exposes_candidates: bool,
    /// Tracker emits a binary segmentation mask alongside the box.
    pub exposes_mask: bool,
    /// Tracker localizes inside a search-region crop that an attack can perturb.
    pub has_search_region: bool,
    /// Tracker matches against a template crop that an attack can perturb.
    pub has_template_region: bool,
}

/// One anchor's scored hypothesis: a decoded box in search-region
/// coordinates, the foreground logit, and the raw regression offsets
/// `[dx, dy, dw, dh]` it was decoded from.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub bbox: BBox,
    pub cls_score: f64,
    pub reg: [f64; 4],
}

/// Per-frame tracker prediction.
///
/// `bbox` is in frame coordinates. `candidates` (when the tracker exposes
/// them) live in search-region coordinates, and `bbox` always equals the
/// argmax-score candidate mapped through `search_mapping`. `mask` (when
/// present) has the search-region extents; callers paste it into frame space
/// through `search_mapping` when frame-level masks are needed.
#[derive(Clone, Debug)]
pub struct TrackerOutput {
    pub bbox: BBox,
    pub candidates: Option<Vec<Candidate>>,
    pub mask: Option<BinaryMap>,
    pub confidence: Option<f64>,
    pub search_mapping: RegionMapping,
}

/// Which tracker a state belongs to; guards against crossing states between
/// tracker instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrackerKind {
    SiamCorr,
    TinyFormer,
}

/// Mutable per-sequence tracking state.
///
/// The field set is shared by both trackers; fields a tracker does not use
/// stay `None`. For the correlation tracker `template_features` holds the
/// template feature map; for the transformer tracker it holds the inherit
/// template tokens while `hybrid_template`, `variation_token`, and
/// `online_template` carry the evolving token sets.
#[derive(Clone, Debug)]
pub struct TrackerState {
    pub kind: TrackerKind,
    pub template_features: Tensor,
    pub hybrid_template: Option<Tensor>,
    pub variation_token: Option<Tensor>,
    pub online_template: Option<Tensor>,
    pub last_bbox: BBox,
    pub frame_index: usize,
    /// Object extents at initialization; the transformer size head regresses
    /// relative to this, which keeps scale estimates from drifting.
    pub init_size: (f64, f64),
}

impl TrackerState {
    /// Guard used by tracking entry points: a state may only be consumed by
    /// the tracker kind that produced it.
    pub fn expect_kind(&self, kind: TrackerKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::State(format!(
                "state belongs to {:?}, not {:?}",
                self.kind, kind
            )))
        }
    }
}

/// Common tracker interface.
///
/// Weights are immutable after construction; all per-sequence mutation lives
/// in [`TrackerState`], so one tracker instance can serve many concurrent
/// sequence evaluations.
pub trait Tracker {
    fn id(&self) -> &'static str;
    fn capabilities(&self) -> Capabilities;

    /// Square template crop around the initial box, resampled to the
    /// tracker's template input size.
    fn template_crop(&self, frame: &Image, bbox: &BBox) -> Result<RegionCrop>;

    /// Build a fresh state from an (optionally perturbed) template crop.
    fn init_from_template(&self, tmpl: &RegionCrop, bbox: &BBox) -> Result<TrackerState>;

    /// Square search crop around the last prediction, resampled to the
    /// tracker's search input size.
    fn search_crop(&self, frame: &Image, state: &TrackerState) -> Result<RegionCrop>;

    /// One tracking step on an already-extracted (optionally perturbed)
    /// search crop. `frame_dims` is `(height, width)` of the source frame and
    /// bounds the updated box.
    fn track_from_search(
        &self,
        state: &mut TrackerState,
        search: &RegionCrop,
        frame_dims: (usize, usize),
    ) -> Result<TrackerOutput>;

    /// Initialize on a frame and ground-truth box.
    fn init(&self, frame: &Image, bbox: &BBox) -> Result<TrackerState> {
        let tmpl = self.template_crop(frame, bbox)?;
        self.init_from_template(&tmpl, bbox)
    }

    /// Track one frame: crop around the previous prediction, then step.
    fn track(&self, state: &mut TrackerState, frame: &Image) -> Result<TrackerOutput> {
        let search = self.search_crop(frame, state)?;
        self.track_from_search(state, &search, image_dims(frame)?)
    }
}

/// Keep a freshly decoded box inside sane frame-relative bounds: the center
/// is clamped into the frame and the extents to at most twice the frame side.
pub(crate) fn clamp_bbox_to_frame(bbox: &BBox, frame_dims: (usize, usize)) -> BBox {
    let (h, w) = (frame_dims.0 as f64, frame_dims.1 as f64);
    let bw = bbox.w.clamp(1.0, 2.0 * w);
    let bh = bbox.h.clamp(1.0, 2.0 * h);
    let cx = bbox.cx().clamp(0.0, w);
    let cy = bbox.cy().clamp(0.0, h);
    BBox::from_center(cx, cy, bw, bh)
}

/// Dispatch enum over the two built-in trackers.
#[derive(Debug, Clone)]
pub enum AnyTracker {
    SiamCorr(siamcorr::SiamCorr),
    TinyFormer(tinyformer::TinyFormer),
}

/// Tracker ids accepted by [`AnyTracker::from_id`].
pub const TRACKER_IDS: [&str; 2] = [siamcorr::SiamCorr::ID, tinyformer::TinyFormer::ID];

impl AnyTracker {
    /// Construct a tracker by id with the given weight seed.
    pub fn from_id(id: &str, weight_seed: u64) -> Result<Self> {
        match id {
            siamcorr::SiamCorr::ID => Ok(Self::SiamCorr(siamcorr::SiamCorr::new(weight_seed))),
            tinyformer::TinyFormer::ID => {
                Ok(Self::TinyFormer(tinyformer::TinyFormer::new(weight_seed)))
            }
            other => Err(Error::Config(format!(
                "unknown tracker id {other:?} (expected one of {TRACKER_IDS:?})"
            ))),
        }
    }

    /// Construct a tracker by id with its frozen default weight seed.
    pub fn from_id_default(id: &str) -> Result<Self> {
        match id {
            siamcorr::SiamCorr::ID => Self::from_id(id, siamcorr::DEFAULT_WEIGHT_SEED),
            tinyformer::TinyFormer::ID => Self::from_id(id, tinyformer::DEFAULT_WEIGHT_SEED),
            other => Err(Error::Config(format!(
                "unknown tracker id {other:?} (expected one of {TRACKER_IDS:?})"
            ))),
        }
    }

    /// The tracker's registry id.
    pub fn id(&self) -> &'static str {
        match self {
            Self::SiamCorr(_) => siamcorr::SiamCorr::ID,
            Self::TinyFormer(_) => tinyformer::TinyFormer::ID,
        }
    }

    /// The candidate-exposing tracker, when this is one; the gradient-based
    /// attacks need its concrete loss plumbing.
    pub fn as_siamcorr(&self) -> Option<&siamcorr::SiamCorr> {
        match self {
            Self::SiamCorr(t) => Some(t),
            Self::TinyFormer(_) => None,
        }
    }

    fn inner(&self) -> &dyn Tracker {
        match self {
            Self::SiamCorr(t) => t,
            Self::TinyFormer(t) => t,
        }
    }
}

impl Tracker for AnyTracker {
    fn id(&self) -> &'static str {
        self.inner().id()
    }
    fn capabilities(&self) -> Capabilities {
        self.inner().capabilities()
    }
    fn template_crop(&self, frame: &Image, bbox: &BBox) -> Result<RegionCrop> {
        self.inner().template_crop(frame, bbox)
    }
    fn init_from_template(&self, tmpl: &RegionCrop, bbox: &BBox) -> Result<TrackerState> {
        self.inner().init_from_template(tmpl, bbox)
    }
    fn search_crop(&self, frame: &Image, state: &TrackerState) -> Result<RegionCrop> {
        self.inner().search_crop(frame, state)
    }
    fn track_from_search(
        &self,
        state: &mut TrackerState,
        search: &RegionCrop,
        frame_dims: (usize, usize),
    ) -> Result<TrackerOutput> {
        self.inner().track_from_search(state, search, frame_dims)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_tracker_id_is_a_config_error() {
        let err = AnyTracker::from_id("nonexistent", 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn state_kind_guard_rejects_cross_use() {
        let state = TrackerState {
            kind: TrackerKind::SiamCorr,
            template_features: Tensor::zeros(&[1]),
            hybrid_template: None,
            variation_token: None,
            online_template: None,
            last_bbox: BBox::new(0.0, 0.0, 4.0, 4.0),
            frame_index: 0,
            init_size: (4.0, 4.0),
        };
        assert!(state.expect_kind(TrackerKind::SiamCorr).is_ok());
        assert!(matches!(
            state.expect_kind(TrackerKind::TinyFormer),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn bbox_clamp_keeps_center_inside_frame() {
        let wild = BBox::from_center(-50.0, 900.0, 0.2, 300.0);
        let clamped = clamp_bbox_to_frame(&wild, (64, 64));
        assert!(clamped.cx() >= 0.0 && clamped.cx() <= 64.0);
        assert!(clamped.cy() >= 0.0 && clamped.cy() <= 64.0);
        assert!(clamped.w >= 1.0 && clamped.h <= 128.0);
    }
}
