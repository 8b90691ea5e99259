//! Correlation tracker: a small convolutional backbone shared by the
//! template and search branches, anchor-based classification/regression
//! heads driven by grouped cross-correlation, and an exact hand-written
//! backward pass to the crop pixels of both branches.
//!
//! The weights are sampled once from a seeded stream and never trained;
//! the tracker works by correlation alone, which is all the harness needs.

use crate::error::{Error, Result};
use crate::eval::bbox_iou;
use crate::geom::BBox;
use crate::img::Image;
use crate::ops::{
    conv1x1, conv1x1_vjp_input, conv2d, conv2d_vjp_input, relu, relu_vjp, xcorr2d, xcorr2d_vjp,
};
use crate::rng;
use crate::tensor::Tensor;

use super::crop::{extract_region, square_side, RegionCrop};
use super::{
    clamp_bbox_to_frame, Candidate, Capabilities, Tracker, TrackerKind, TrackerOutput,
    TrackerState,
};

/// Side of the resampled search crop, in pixels.
pub const SEARCH_SIDE: usize = 24;
/// Side of the resampled template crop, in pixels.
pub const TEMPLATE_SIDE: usize = 12;
/// Search window side as a multiple of the box's larger extent.
pub const SEARCH_CROP_FACTOR: f64 = 2.0;
/// Template window side as a multiple of the box's larger extent.
pub const TEMPLATE_CROP_FACTOR: f64 = std::f64::consts::SQRT_2;
/// Side of the correlation response map.
pub const RESPONSE_SIDE: usize = 13;
/// Aspect ratios of the anchor boxes (h/w).
pub const ANCHOR_RATIOS: [f64; 3] = [0.5, 1.0, 2.0];
/// Geometric mean side of an anchor box, in search-region pixels.
pub const ANCHOR_BASE_SIZE: f64 = 12.0;
/// Total candidates per frame: one anchor per ratio per response cell.
pub const NUM_CANDIDATES: usize = ANCHOR_RATIOS.len() * RESPONSE_SIDE * RESPONSE_SIDE;

/// Weight seed used by the stock tracker registry. Frozen after a sweep of
/// candidate seeds against the tracking quality tests below.
pub const DEFAULT_WEIGHT_SEED: u64 = 52;

/// Continuous region coordinate of the anchor centered in response cell 0.
/// Two 3x3 valid convolutions trim 2 pixels per side and the 8-wide kernel
/// window spans 8 feature cells, so cell (i, j) looks at a receptive field
/// centered at (j + 6, i + 6).
const ANCHOR_CENTER_OFFSET: f64 = 6.0;
/// Scale applied to raw regression offsets before decoding.
const REG_SCALE: f64 = 0.1;
/// Weight of the regression term in the tracking loss.
const REG_WEIGHT: f64 = 1.0;
/// Clamp for the scaled log-size offsets, keeping `exp` sane.
const SIZE_CLAMP: f64 = 4.0;
/// Anchors overlapping the target at least this much are positive labels.
const POSITIVE_IOU: f64 = 0.5;

const BACKBONE_MID: usize = 6;
const BACKBONE_OUT: usize = 4;
const CLS_GROUPS: usize = ANCHOR_RATIOS.len();
const REG_GROUPS: usize = ANCHOR_RATIOS.len() * 4;

/// Anchor box for ratio `r` at response cell `(i, j)`, in continuous
/// search-region coordinates.
pub fn anchor_box(r: usize, i: usize, j: usize) -> BBox {
    let ratio = ANCHOR_RATIOS[r];
    BBox::from_center(
        j as f64 + ANCHOR_CENTER_OFFSET,
        i as f64 + ANCHOR_CENTER_OFFSET,
        ANCHOR_BASE_SIZE / ratio.sqrt(),
        ANCHOR_BASE_SIZE * ratio.sqrt(),
    )
}

/// Decode raw regression offsets against an anchor: linear center shift
/// scaled by the anchor extent, exponential size change.
pub fn decode_offsets(anchor: &BBox, reg: [f64; 4]) -> BBox {
    BBox::from_center(
        anchor.cx() + reg[0] * REG_SCALE * anchor.w,
        anchor.cy() + reg[1] * REG_SCALE * anchor.h,
        anchor.w * (reg[2] * REG_SCALE).clamp(-SIZE_CLAMP, SIZE_CLAMP).exp(),
        anchor.h * (reg[3] * REG_SCALE).clamp(-SIZE_CLAMP, SIZE_CLAMP).exp(),
    )
}

/// Inverse of [`decode_offsets`] for a non-degenerate target box.
pub fn encode_offsets(target: &BBox, anchor: &BBox) -> [f64; 4] {
    [
        (target.cx() - anchor.cx()) / (REG_SCALE * anchor.w),
        (target.cy() - anchor.cy()) / (REG_SCALE * anchor.h),
        (target.w / anchor.w).ln() / REG_SCALE,
        (target.h / anchor.h).ln() / REG_SCALE,
    ]
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy on a raw logit.
fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn smooth_l1(d: f64) -> f64 {
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

fn smooth_l1_grad(d: f64) -> f64 {
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Sampled network parameters. Every layer is bias-free.
#[derive(Debug, Clone)]
pub struct SiamCorrWeights {
    /// First backbone stage, `[6, 3, 3, 3]`.
    pub conv1: Tensor,
    /// Second backbone stage, `[4, 6, 3, 3]`.
    pub conv2: Tensor,
    /// Template-side head producing the grouped classification kernel, `[12, 4]`.
    pub wcls_z: Tensor,
    /// Search-side classification projection, `[4, 4]`.
    pub wcls_x: Tensor,
    /// Template-side head producing the grouped regression kernel, `[48, 4]`.
    pub wreg_z: Tensor,
    /// Search-side regression projection, `[4, 4]`.
    pub wreg_x: Tensor,
}

impl SiamCorrWeights {
    /// Sample all layers from one stream, uniform over ±√(1/fan_in),
    /// in a fixed order so a seed pins every parameter.
    pub fn sample(weight_seed: u64) -> Self {
        let mut r = rng::stream(weight_seed, &[rng::tag("siamcorr-weights")]);
        let conv = |cout: usize, cin: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let a = (1.0 / (cin * 9) as f64).sqrt();
            Tensor::rand_uniform([cout, cin, 3, 3], -a, a, rng)
        };
        let lin = |cout: usize, cin: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let a = (1.0 / cin as f64).sqrt();
            Tensor::rand_uniform([cout, cin], -a, a, rng)
        };
        let conv1 = conv(BACKBONE_MID, 3, &mut r);
        let conv2 = conv(BACKBONE_OUT, BACKBONE_MID, &mut r);
        let wcls_z = lin(CLS_GROUPS * BACKBONE_OUT, BACKBONE_OUT, &mut r);
        let wcls_x = lin(BACKBONE_OUT, BACKBONE_OUT, &mut r);
        let wreg_z = lin(REG_GROUPS * BACKBONE_OUT, BACKBONE_OUT, &mut r);
        let wreg_x = lin(BACKBONE_OUT, BACKBONE_OUT, &mut r);
        SiamCorrWeights {
            conv1,
            conv2,
            wcls_z,
            wcls_x,
            wreg_z,
            wreg_x,
        }
    }
}

/// Intermediate activations of one backbone pass, kept for the backward
/// sweep.
#[derive(Debug, Clone)]
pub struct BackboneTrace {
    /// Crop pixels scaled to `[0, 1]`.
    pub x0: Tensor,
    /// First stage pre-activation.
    pub z1: Tensor,
    /// First stage post-ReLU.
    pub a1: Tensor,
    /// Second stage pre-activation.
    pub z2: Tensor,
    /// Final features.
    pub feats: Tensor,
}

/// Everything the search-branch forward pass produces, sufficient both to
/// pick a box and to run the backward sweep.
#[derive(Debug, Clone)]
pub struct SearchForward {
    pub trace: BackboneTrace,
    /// Projected search features feeding the classification correlation.
    pub cls_x: Tensor,
    /// Projected search features feeding the regression correlation.
    pub reg_x: Tensor,
    /// Grouped classification kernel from the template, `[12, 8, 8]`.
    pub cls_k: Tensor,
    /// Grouped regression kernel from the template, `[48, 8, 8]`.
    pub reg_k: Tensor,
    /// Classification logits, `[3, 13, 13]`, one map per anchor ratio.
    pub cls_maps: Tensor,
    /// Regression offsets, `[12, 13, 13]`, four consecutive maps per ratio.
    pub reg_maps: Tensor,
    /// Flat candidate list, index `r*169 + i*13 + j`.
    pub candidates: Vec<Candidate>,
}

/// Classification/regression targets over the anchor grid.
#[derive(Debug, Clone)]
pub struct SiamLabels {
    /// One 0/1 target per candidate.
    pub cls: Vec<f64>,
    /// Encoded regression target per candidate (used only at positives).
    pub reg: Vec<[f64; 4]>,
    /// Indices of the positive anchors.
    pub positives: Vec<usize>,
}

/// Anchor labels for a target box in search-region coordinates: positives
/// are anchors overlapping the target by at least the threshold, with a
/// best-anchor fallback so the positive set is never empty.
pub fn build_labels(target: &BBox) -> Result<SiamLabels> {
    if target.is_degenerate() {
        return Err(Error::Degenerate(format!(
            "cannot label anchors against a {}x{} target",
            target.w, target.h
        )));
    }
    let mut cls = vec![0.0; NUM_CANDIDATES];
    let mut reg = vec![[0.0; 4]; NUM_CANDIDATES];
    let mut positives = Vec::new();
    let mut best_idx = 0;
    let mut best_iou = -1.0;
    for r in 0..ANCHOR_RATIOS.len() {
        for i in 0..RESPONSE_SIDE {
            for j in 0..RESPONSE_SIDE {
                let idx = (r * RESPONSE_SIDE + i) * RESPONSE_SIDE + j;
                let anchor = anchor_box(r, i, j);
                reg[idx] = encode_offsets(target, &anchor);
                let iou = bbox_iou(&anchor, target);
                if iou > best_iou {
                    best_iou = iou;
                    best_idx = idx;
                }
                if iou >= POSITIVE_IOU {
                    cls[idx] = 1.0;
                    positives.push(idx);
                }
            }
        }
    }
    if positives.is_empty() {
        cls[best_idx] = 1.0;
        positives.push(best_idx);
    }
    Ok(SiamLabels {
        cls,
        reg,
        positives,
    })
}

/// Tracking loss value plus its gradient w.r.t. the two response tensors.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    /// `[3, 13, 13]`, gradient into the classification logits.
    pub dcls_maps: Tensor,
    /// `[12, 13, 13]`, gradient into the regression offsets.
    pub dreg_maps: Tensor,
}

/// Mean binary cross-entropy over every anchor plus mean smooth-L1 over
/// the positive anchors' offsets. Both terms are differentiable in the
/// response maps; the gradients come back in map layout.
pub fn tracking_loss(fwd: &SearchForward, labels: &SiamLabels) -> Result<LossGrad> {
    if labels.cls.len() != NUM_CANDIDATES || labels.reg.len() != NUM_CANDIDATES {
        return Err(Error::shape(
            "tracking_loss",
            format!("labels cover {} anchors, want {}", labels.cls.len(), NUM_CANDIDATES),
        ));
    }
    if labels.positives.is_empty() {
        return Err(Error::Degenerate("tracking loss with no positive anchors".into()));
    }
    let logits = fwd.cls_maps.data();
    let mut dcls = vec![0.0; NUM_CANDIDATES];
    let mut cls_loss = 0.0;
    for idx in 0..NUM_CANDIDATES {
        let (z, y) = (logits[idx], labels.cls[idx]);
        cls_loss += bce_with_logits(z, y);
        dcls[idx] = (sigmoid(z) - y) / NUM_CANDIDATES as f64;
    }
    cls_loss /= NUM_CANDIDATES as f64;

    let plane = RESPONSE_SIDE * RESPONSE_SIDE;
    let mut dreg_maps = Tensor::zeros([REG_GROUPS, RESPONSE_SIDE, RESPONSE_SIDE]);
    let norm = (labels.positives.len() * 4) as f64;
    let mut reg_loss = 0.0;
    {
        let dreg = dreg_maps.data_mut();
        for &idx in &labels.positives {
            let r = idx / plane;
            let cell = idx % plane;
            for d in 0..4 {
                let pred = fwd.reg_maps.data()[(r * 4 + d) * plane + cell];
                let diff = pred - labels.reg[idx][d];
                reg_loss += smooth_l1(diff);
                dreg[(r * 4 + d) * plane + cell] = REG_WEIGHT * smooth_l1_grad(diff) / norm;
            }
        }
    }
    reg_loss /= norm;

    Ok(LossGrad {
        loss: cls_loss + REG_WEIGHT * reg_loss,
        dcls_maps: Tensor::new([CLS_GROUPS, RESPONSE_SIDE, RESPONSE_SIDE], dcls)?,
        dreg_maps,
    })
}

/// Contiguous channel group `[channels, h, w]` starting at `group * channels`.
fn channel_group(t: &Tensor, group: usize, channels: usize) -> Result<Tensor> {
    let (h, w) = (t.dim(1), t.dim(2));
    let plane = h * w;
    let start = group * channels * plane;
    Tensor::new(
        [channels, h, w],
        t.data()[start..start + channels * plane].to_vec(),
    )
}

/// One rank-2 plane of a `[n, h, w]` tensor.
fn map_plane(t: &Tensor, idx: usize) -> Result<Tensor> {
    let (h, w) = (t.dim(1), t.dim(2));
    let plane = h * w;
    Tensor::new([h, w], t.data()[idx * plane..(idx + 1) * plane].to_vec())
}

/// The tracker itself: weights only, all state lives in [`TrackerState`].
#[derive(Debug, Clone)]
pub struct SiamCorr {
    pub weights: SiamCorrWeights,
}

impl SiamCorr {
    pub const ID: &'static str = "siamcorr";

    pub fn new(weight_seed: u64) -> Self {
        SiamCorr {
            weights: SiamCorrWeights::sample(weight_seed),
        }
    }

    fn forward_backbone(
        &self,
        pixels: &Tensor,
        side: usize,
        what: &'static str,
    ) -> Result<BackboneTrace> {
        if pixels.rank() != 3 || pixels.dim(0) != 3 || pixels.dim(1) != side || pixels.dim(2) != side
        {
            return Err(Error::shape(
                what,
                format!("pixels {:?}, want [3, {side}, {side}]", pixels.shape()),
            ));
        }
        let x0 = pixels.scale(1.0 / 255.0);
        let z1 = conv2d(&x0, &self.weights.conv1)?;
        let a1 = relu(&z1);
        let z2 = conv2d(&a1, &self.weights.conv2)?;
        let feats = relu(&z2);
        Ok(BackboneTrace {
            x0,
            z1,
            a1,
            z2,
            feats,
        })
    }

    /// Backbone pass over a template crop. The final features act as the
    /// stored template; the full trace is only needed when differentiating
    /// w.r.t. the template pixels.
    pub fn forward_template(&self, pixels: &Tensor) -> Result<BackboneTrace> {
        self.forward_backbone(pixels, TEMPLATE_SIDE, "template forward")
    }

    /// Full search-branch pass: backbone, head projections, grouped
    /// correlation against the template kernels, and candidate decoding.
    pub fn forward_search(&self, pixels: &Tensor, template_feats: &Tensor) -> Result<SearchForward> {
        let feat_side = TEMPLATE_SIDE - 4;
        if template_feats.rank() != 3
            || template_feats.dim(0) != BACKBONE_OUT
            || template_feats.dim(1) != feat_side
            || template_feats.dim(2) != feat_side
        {
            return Err(Error::shape(
                "search forward",
                format!(
                    "template features {:?}, want [{BACKBONE_OUT}, {feat_side}, {feat_side}]",
                    template_feats.shape()
                ),
            ));
        }
        let trace = self.forward_backbone(pixels, SEARCH_SIDE, "search forward")?;
        let cls_x = conv1x1(&trace.feats, &self.weights.wcls_x)?;
        let reg_x = conv1x1(&trace.feats, &self.weights.wreg_x)?;
        let cls_k = conv1x1(template_feats, &self.weights.wcls_z)?;
        let reg_k = conv1x1(template_feats, &self.weights.wreg_z)?;

        let plane = RESPONSE_SIDE * RESPONSE_SIDE;
        let mut cls_data = Vec::with_capacity(CLS_GROUPS * plane);
        for r in 0..CLS_GROUPS {
            let map = xcorr2d(&cls_x, &channel_group(&cls_k, r, BACKBONE_OUT)?)?;
            cls_data.extend_from_slice(map.data());
        }
        let mut reg_data = Vec::with_capacity(REG_GROUPS * plane);
        for g in 0..REG_GROUPS {
            let map = xcorr2d(&reg_x, &channel_group(&reg_k, g, BACKBONE_OUT)?)?;
            reg_data.extend_from_slice(map.data());
        }
        let cls_maps = Tensor::new([CLS_GROUPS, RESPONSE_SIDE, RESPONSE_SIDE], cls_data)?;
        let reg_maps = Tensor::new([REG_GROUPS, RESPONSE_SIDE, RESPONSE_SIDE], reg_data)?;

        let mut candidates = Vec::with_capacity(NUM_CANDIDATES);
        for r in 0..ANCHOR_RATIOS.len() {
            for i in 0..RESPONSE_SIDE {
                for j in 0..RESPONSE_SIDE {
                    let reg = [
                        reg_maps.at(&[r * 4, i, j]),
                        reg_maps.at(&[r * 4 + 1, i, j]),
                        reg_maps.at(&[r * 4 + 2, i, j]),
                        reg_maps.at(&[r * 4 + 3, i, j]),
                    ];
                    candidates.push(Candidate {
                        bbox: decode_offsets(&anchor_box(r, i, j), reg),
                        cls_score: cls_maps.at(&[r, i, j]),
                        reg,
                    });
                }
            }
        }
        Ok(SearchForward {
            trace,
            cls_x,
            reg_x,
            cls_k,
            reg_k,
            cls_maps,
            reg_maps,
            candidates,
        })
    }

    fn backbone_vjp(&self, trace: &BackboneTrace, dfeats: &Tensor) -> Result<Tensor> {
        let dz2 = relu_vjp(&trace.z2, dfeats)?;
        let da1 = conv2d_vjp_input(trace.a1.shape(), &self.weights.conv2, &dz2)?;
        let dz1 = relu_vjp(&trace.z1, &da1)?;
        let dx0 = conv2d_vjp_input(trace.x0.shape(), &self.weights.conv1, &dz1)?;
        Ok(dx0.scale(1.0 / 255.0))
    }

    /// Shared head backward: response-map gradients down to the search
    /// pixels, plus the gradients on both template-derived kernels.
    fn head_vjp(
        &self,
        fwd: &SearchForward,
        dcls_maps: &Tensor,
        dreg_maps: &Tensor,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        if dcls_maps.shape() != fwd.cls_maps.shape() || dreg_maps.shape() != fwd.reg_maps.shape() {
            return Err(Error::shape(
                "head backward",
                format!(
                    "gradients {:?}/{:?} vs maps {:?}/{:?}",
                    dcls_maps.shape(),
                    dreg_maps.shape(),
                    fwd.cls_maps.shape(),
                    fwd.reg_maps.shape()
                ),
            ));
        }
        let mut dcls_x = Tensor::zeros(fwd.cls_x.shape().to_vec());
        let mut dcls_k = Tensor::zeros(fwd.cls_k.shape().to_vec());
        let kernel_len = BACKBONE_OUT * (TEMPLATE_SIDE - 4) * (TEMPLATE_SIDE - 4);
        for r in 0..CLS_GROUPS {
            let up = map_plane(dcls_maps, r)?;
            let (ds, dk) = xcorr2d_vjp(&fwd.cls_x, &channel_group(&fwd.cls_k, r, BACKBONE_OUT)?, &up)?;
            dcls_x = dcls_x.add(&ds)?;
            dcls_k.data_mut()[r * kernel_len..(r + 1) * kernel_len].copy_from_slice(dk.data());
        }
        let mut dreg_x = Tensor::zeros(fwd.reg_x.shape().to_vec());
        let mut dreg_k = Tensor::zeros(fwd.reg_k.shape().to_vec());
        for g in 0..REG_GROUPS {
            let up = map_plane(dreg_maps, g)?;
            let (ds, dk) = xcorr2d_vjp(&fwd.reg_x, &channel_group(&fwd.reg_k, g, BACKBONE_OUT)?, &up)?;
            dreg_x = dreg_x.add(&ds)?;
            dreg_k.data_mut()[g * kernel_len..(g + 1) * kernel_len].copy_from_slice(dk.data());
        }
        let dfeats = conv1x1_vjp_input(&self.weights.wcls_x, &dcls_x)?
            .add(&conv1x1_vjp_input(&self.weights.wreg_x, &dreg_x)?)?;
        let dsearch_pixels = self.backbone_vjp(&fwd.trace, &dfeats)?;
        Ok((dsearch_pixels, dcls_k, dreg_k))
    }

    /// Gradient of a scalar loss w.r.t. the search-crop pixels, given the
    /// loss gradient in response-map layout.
    pub fn backprop_search(
        &self,
        fwd: &SearchForward,
        dcls_maps: &Tensor,
        dreg_maps: &Tensor,
    ) -> Result<Tensor> {
        Ok(self.head_vjp(fwd, dcls_maps, dreg_maps)?.0)
    }

    /// Gradients w.r.t. both branches' crop pixels. The template trace must
    /// be the one whose features produced `fwd`'s kernels.
    pub fn backprop(
        &self,
        template_trace: &BackboneTrace,
        fwd: &SearchForward,
        dcls_maps: &Tensor,
        dreg_maps: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let (dsearch, dcls_k, dreg_k) = self.head_vjp(fwd, dcls_maps, dreg_maps)?;
        let dtemplate_feats = conv1x1_vjp_input(&self.weights.wcls_z, &dcls_k)?
            .add(&conv1x1_vjp_input(&self.weights.wreg_z, &dreg_k)?)?;
        let dtemplate = self.backbone_vjp(template_trace, &dtemplate_feats)?;
        Ok((dsearch, dtemplate))
    }
}

/// Index of the highest-scoring candidate; earlier index wins ties.
pub fn argmax_candidate(candidates: &[Candidate]) -> usize {
    let mut best = 0;
    for (idx, c) in candidates.iter().enumerate() {
        if c.cls_score > candidates[best].cls_score {
            best = idx;
        }
    }
    best
}

impl Tracker for SiamCorr {
    fn id(&self) -> &'static str {
        Self::ID
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            exposes_candidates: true,
            exposes_mask: false,
            has_search_region: true,
            has_template_region: true,
        }
    }

    fn template_crop(&self, frame: &Image, bbox: &BBox) -> Result<RegionCrop> {
        let side = square_side(bbox, TEMPLATE_CROP_FACTOR)?;
        extract_region(frame, (bbox.cx(), bbox.cy()), side, TEMPLATE_SIDE)
    }

    fn init_from_template(&self, tmpl: &RegionCrop, bbox: &BBox) -> Result<TrackerState> {
        let trace = self.forward_template(&tmpl.pixels)?;
        Ok(TrackerState {
            kind: TrackerKind::SiamCorr,
            template_features: trace.feats,
            hybrid_template: None,
            variation_token: None,
            online_template: None,
            last_bbox: *bbox,
            frame_index: 0,
            init_size: (bbox.w, bbox.h),
        })
    }

    fn search_crop(&self, frame: &Image, state: &TrackerState) -> Result<RegionCrop> {
        let side = square_side(&state.last_bbox, SEARCH_CROP_FACTOR)?;
        extract_region(
            frame,
            (state.last_bbox.cx(), state.last_bbox.cy()),
            side,
            SEARCH_SIDE,
        )
    }

    fn track_from_search(
        &self,
        state: &mut TrackerState,
        search: &RegionCrop,
        frame_dims: (usize, usize),
    ) -> Result<TrackerOutput> {
        state.expect_kind(TrackerKind::SiamCorr)?;
        let fwd = self.forward_search(&search.pixels, &state.template_features)?;
        let best = argmax_candidate(&fwd.candidates);
        let region_box = fwd.candidates[best].bbox;
        let bbox = clamp_bbox_to_frame(&search.mapping.bbox_to_frame(&region_box), frame_dims);
        let confidence = sigmoid(fwd.candidates[best].cls_score);
        state.last_bbox = bbox;
        state.frame_index += 1;
        Ok(TrackerOutput {
            bbox,
            candidates: Some(fwd.candidates),
            mask: None,
            confidence: Some(confidence),
            search_mapping: search.mapping,
        })
    }
}
