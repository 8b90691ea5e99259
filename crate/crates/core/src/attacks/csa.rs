//! Cooling-shrinking attack: margin losses through a surrogate, transferred.
//!
//! The attack owns a differentiable surrogate (the correlation tracker with
//! its stock weights) and never needs gradients from the target. At init it
//! perturbs the template crop once, descending the margin losses through the
//! surrogate's template branch; per frame it perturbs the target's search
//! crop the same way, evaluating the surrogate against the perturbed
//! template's features. Both trackers share crop geometry, so the surrogate's
//! pixel gradients line up with the target's crops and the perturbations
//! transfer directly.
//!
//! Two margin losses drive the descent: *cooling* pushes the top-scoring
//! candidates' scores down toward the pooled negative mean, *shrinking*
//! pushes their width/height regression factors down. Margins floor both, so
//! candidates already cold or shrunken stop contributing gradient.

use super::{applicable, AttackConfig, AttackId, AttackResult, clip_to_ball, PerturbationMap};
use crate::error::{Error, Result};
use crate::geom::BBox;
use crate::img::Image;
use crate::metrics;
use crate::ops;
use crate::tensor::Tensor;
use crate::trackers::crop::RegionCrop;
use crate::trackers::siamcorr::{SiamCorr, NUM_CANDIDATES, RESPONSE_SIDE};
use crate::trackers::{AnyTracker, Candidate, Tracker, TrackerState};

/// Margin floors `(m_c, m_w, m_h)` for the cooling and shrinking terms.
/// Negative floors keep gradients alive a while after a candidate's margin
/// or regression factor crosses zero.
pub const DEFAULT_MARGINS: (f64, f64, f64) = (-5.0, -5.0, -5.0);
/// How many top-scoring candidates count as positives.
pub const POSITIVE_SET: usize = 32;

/// Carried CSA state: the template perturbation found at init and the
/// surrogate features of the perturbed template, reused by every frame's
/// search-side descent.
#[derive(Clone, Debug)]
pub struct CsaState {
    pub template_delta: Tensor,
    pub template_feats: Tensor,
}

/// Candidate indices split into the `n` top-scoring positives and the rest,
/// plus the mean negative score. Ties break toward the lower index.
fn split(candidates: &[Candidate], n: usize) -> Result<(Vec<usize>, Vec<usize>, f64)> {
    if candidates.is_empty() || n == 0 {
        return Err(Error::Degenerate(
            "cooling-shrinking losses need candidates and a nonzero positive set".into(),
        ));
    }
    if candidates.len() <= n {
        return Err(Error::Degenerate(format!(
            "{} candidates cannot split into {} positives plus a nonempty negative set",
            candidates.len(),
            n
        )));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        candidates[j]
            .cls_score
            .partial_cmp(&candidates[i].cls_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let positives = order[..n].to_vec();
    let negatives = order[n..].to_vec();
    let neg_mean =
        negatives.iter().map(|&i| candidates[i].cls_score).sum::<f64>() / negatives.len() as f64;
    Ok((positives, negatives, neg_mean))
}

/// The two margin losses `(cooling, shrinking)`.
///
/// Cooling averages `max(fᵢ − f̄₋, m_c)` over the positives, where `f̄₋` is
/// the mean negative score. Shrinking averages `max(R_w, m_w)` and
/// `max(R_h, m_h)` over the positives' raw width/height regression factors.
/// Both are normalized by `n`.
pub fn csa_losses(candidates: &[Candidate], margins: (f64, f64, f64), n: usize) -> Result<(f64, f64)> {
    let (positives, _, neg_mean) = split(candidates, n)?;
    let (m_c, m_w, m_h) = margins;
    let inv = 1.0 / n as f64;
    let cooling = positives
        .iter()
        .map(|&i| (candidates[i].cls_score - neg_mean).max(m_c))
        .sum::<f64>()
        * inv;
    let shrinking = positives
        .iter()
        .map(|&i| candidates[i].reg[2].max(m_w) + candidates[i].reg[3].max(m_h))
        .sum::<f64>()
        * inv;
    Ok((cooling, shrinking))
}

/// Gradient of `cooling + shrinking` in response-map layout, ready for the
/// surrogate's backward pass.
#[derive(Clone, Debug)]
pub struct CsaGrads {
    /// `[3, 13, 13]`, gradient into the classification logits.
    pub dcls_maps: Tensor,
    /// `[12, 13, 13]`, gradient into the regression offsets.
    pub dreg_maps: Tensor,
}

pub fn csa_losses_grad(candidates: &[Candidate], margins: (f64, f64, f64), n: usize) -> Result<CsaGrads> {
    if candidates.len() != NUM_CANDIDATES {
        return Err(Error::shape(
            "csa_losses_grad",
            format!("{} candidates do not fill the {} anchor grid", candidates.len(), NUM_CANDIDATES),
        ));
    }
    let (positives, negatives, neg_mean) = split(candidates, n)?;
    let (m_c, m_w, m_h) = margins;
    let inv = 1.0 / n as f64;
    let cells = RESPONSE_SIDE * RESPONSE_SIDE;

    let mut dcls = Tensor::zeros([NUM_CANDIDATES / cells, RESPONSE_SIDE, RESPONSE_SIDE]);
    let mut dreg = Tensor::zeros([(NUM_CANDIDATES / cells) * 4, RESPONSE_SIDE, RESPONSE_SIDE]);
    let dcls_data = dcls.data_mut();
    // Positives above the cooling floor push their own score down; each also
    // pulls the pooled negative mean, spreading `−1/|neg|` across negatives.
    let mut active = 0usize;
    for &i in &positives {
        if candidates[i].cls_score - neg_mean > m_c {
            dcls_data[i] += inv;
            active += 1;
        }
    }
    if active > 0 {
        let neg_grad = -(active as f64) * inv / negatives.len() as f64;
        for &j in &negatives {
            dcls_data[j] += neg_grad;
        }
    }

    let dreg_data = dreg.data_mut();
    for &i in &positives {
        let (ratio, cell) = (i / cells, i % cells);
        if candidates[i].reg[2] > m_w {
            dreg_data[(ratio * 4 + 2) * cells + cell] += inv;
        }
        if candidates[i].reg[3] > m_h {
            dreg_data[(ratio * 4 + 3) * cells + cell] += inv;
        }
    }

    Ok(CsaGrads {
        dcls_maps: dcls,
        dreg_maps: dreg,
    })
}

/// One-time template perturbation, run between cropping and tracker init.
///
/// Descends the margin losses w.r.t. the template pixels, evaluating the
/// surrogate against the initial frame's search crop, and returns the carried
/// state plus the perturbed template pixels for the target to init from.
pub fn init_template_attack(
    surrogate: &SiamCorr,
    frame0: &Image,
    init_bbox: &BBox,
    tmpl: &RegionCrop,
    cfg: &AttackConfig,
) -> Result<(CsaState, Tensor)> {
    let scratch = surrogate.init(frame0, init_bbox)?;
    let search0 = surrogate.search_crop(frame0, &scratch)?;
    let clean = &tmpl.pixels;

    let mut delta = Tensor::zeros(clean.shape().to_vec());
    for _ in 0..cfg.iters {
        let z = clean.add(&delta)?.clamp(0.0, 255.0);
        let trace = surrogate.forward_template(&z)?;
        let fwd = surrogate.forward_search(&search0.pixels, &trace.feats)?;
        let grads = csa_losses_grad(&fwd.candidates, DEFAULT_MARGINS, POSITIVE_SET)?;
        let (_dsearch, dtemplate) = surrogate.backprop(&trace, &fwd, &grads.dcls_maps, &grads.dreg_maps)?;
        delta = clip_to_ball(&delta.zip_map(&dtemplate, |d, g| d - cfg.alpha * ops::sign(g))?, cfg.epsilon);
    }

    let adv = clean.add(&delta)?.clamp(0.0, 255.0);
    let feats = surrogate.forward_template(&adv)?.feats;
    Ok((
        CsaState {
            template_delta: delta,
            template_feats: feats,
        },
        adv,
    ))
}

/// Attack the upcoming frame's search crop through the surrogate and hand
/// the perturbed crop to the target.
pub fn csa_attack(
    surrogate: &SiamCorr,
    target: &AnyTracker,
    csa: &CsaState,
    state: &TrackerState,
    frame: &Image,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    if !applicable(AttackId::Csa, &target.capabilities()) {
        return Err(Error::Applicability {
            attack: "csa".to_string(),
            tracker: target.id().to_string(),
            reason: "the transfer needs perturbable template and search regions".to_string(),
        });
    }

    let search = target.search_crop(frame, state)?;
    let clean = search.pixels;
    let mut adv = clean.clone();
    let mut trace = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let fwd = surrogate.forward_search(&adv, &csa.template_feats)?;
        let (cooling, shrinking) = csa_losses(&fwd.candidates, DEFAULT_MARGINS, POSITIVE_SET)?;
        trace.push(cooling + shrinking);
        let grads = csa_losses_grad(&fwd.candidates, DEFAULT_MARGINS, POSITIVE_SET)?;
        let grad = surrogate.backprop_search(&fwd, &grads.dcls_maps, &grads.dreg_maps)?;
        let delta = adv.sub(&clean)?.zip_map(&grad, |d, g| d - cfg.alpha * ops::sign(g))?;
        adv = clean.add(&clip_to_ball(&delta, cfg.epsilon))?.clamp(0.0, 255.0);
    }

    let pert = adv.sub(&clean)?;
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
