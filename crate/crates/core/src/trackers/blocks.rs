//! Attention building blocks for the transformer tracker.
//!
//! Token sets are rank-2 tensors, one row per token. Positional tables are
//! added to queries and keys only, never to values, and every linear layer
//! is bias-free. The free functions return raw attention outputs where the
//! tracker composes its own residuals, and residual-wrapped outputs where
//! the block definition already includes them.

use crate::error::{Error, Result};
use crate::ops::{matmul, multihead, relu, MultiheadProjections};
use crate::tensor::Tensor;

use super::TrackerState;

fn same_shape(context: &'static str, x: &Tensor, p: &Tensor) -> Result<()> {
    if x.rank() != 2 || x.shape() != p.shape() {
        return Err(Error::shape(
            context,
            format!("tokens {:?} vs positional table {:?}", x.shape(), p.shape()),
        ));
    }
    Ok(())
}

/// Ego-context augmentation: residual self-attention over one token set,
/// with the positional table entering the query and key paths only.
pub fn eca(
    x: &Tensor,
    p_x: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<Tensor> {
    same_shape("eca", x, p_x)?;
    let xp = x.add(p_x)?;
    x.add(&multihead(&xp, &xp, x, heads, proj)?)
}

/// Two bias-free linear maps with a ReLU between them.
#[derive(Debug, Clone)]
pub struct FeedForward {
    /// Expansion weights, `[d, hidden]`.
    pub w1: Tensor,
    /// Contraction weights, `[hidden, d]`.
    pub w2: Tensor,
}

impl FeedForward {
    /// All-zero weights; the block contributes nothing to a residual sum.
    pub fn zeros(d: usize, hidden: usize) -> Self {
        FeedForward {
            w1: Tensor::zeros([d, hidden]),
            w2: Tensor::zeros([hidden, d]),
        }
    }

    /// Uniform init scaled by each layer's fan-in.
    pub fn seeded(d: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        let a1 = (1.0 / d as f64).sqrt();
        let a2 = (1.0 / hidden as f64).sqrt();
        FeedForward {
            w1: Tensor::rand_uniform([d, hidden], -a1, a1, rng),
            w2: Tensor::rand_uniform([hidden, d], -a2, a2, rng),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        matmul(&relu(&matmul(x, &self.w1)?), &self.w2)
    }
}

/// Cross-feature augmentation: the query stream attends into the key/value
/// stream with a residual, then passes through a residual feed-forward.
pub fn cfa(
    x_q: &Tensor,
    p_q: &Tensor,
    x_kv: &Tensor,
    p_kv: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
    ffn: &FeedForward,
) -> Result<Tensor> {
    same_shape("cfa query stream", x_q, p_q)?;
    same_shape("cfa key/value stream", x_kv, p_kv)?;
    let q = x_q.add(p_q)?;
    let k = x_kv.add(p_kv)?;
    let mixed = x_q.add(&multihead(&q, &k, x_kv, heads, proj)?)?;
    mixed.add(&ffn.apply(&mixed)?)
}

/// Joint attention where both the target and search streams attend over the
/// concatenated target+search keys and values. Returns the raw attention
/// outputs `(target, search)`; callers add their own residuals. Empty key
/// and value sets simply drop out of the concatenation.
#[allow(clippy::too_many_arguments)]
pub fn mixed_attention(
    q_t: &Tensor,
    k_t: &Tensor,
    v_t: &Tensor,
    q_s: &Tensor,
    k_s: &Tensor,
    v_s: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<(Tensor, Tensor)> {
    let k_m = Tensor::concat_rows(&[k_t, k_s])?;
    let v_m = Tensor::concat_rows(&[v_t, v_s])?;
    let a_t = multihead(q_t, &k_m, &v_m, heads, proj)?;
    let a_s = multihead(q_s, &k_m, &v_m, heads, proj)?;
    Ok((a_t, a_s))
}

/// Pruned variant of the joint attention: the target stream attends only to
/// its own keys, while the search stream still sees the mixed key/value set
/// supplied by the caller. Returns raw outputs `(target, search)`.
#[allow(clippy::too_many_arguments)]
pub fn asymmetric_mixed_attention(
    q_t: &Tensor,
    k_t: &Tensor,
    v_t: &Tensor,
    q_s: &Tensor,
    k_m: &Tensor,
    v_m: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<(Tensor, Tensor)> {
    let a_t = multihead(q_t, k_t, v_t, heads, proj)?;
    let a_s = multihead(q_s, k_m, v_m, heads, proj)?;
    Ok((a_t, a_s))
}

/// Residual self-attention followed by a residual feed-forward, over a
/// fixed-size stacked token set. The positional table is owned by the block
/// because the stack layout never changes between calls.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    /// Positional table for the stacked tokens, `[tokens, d]`.
    pub pos: Tensor,
    pub heads: usize,
    pub proj: MultiheadProjections,
    pub ffn: FeedForward,
}

impl EncoderBlock {
    /// A block whose `apply` is the identity map: the zero output projection
    /// silences the attention term and the zero feed-forward silences the
    /// second residual, leaving the input untouched.
    pub fn identity(tokens: usize, d: usize, heads: usize) -> Self {
        let mut proj = MultiheadProjections::identity(d);
        proj.wo = Tensor::zeros([d, d]);
        EncoderBlock {
            pos: Tensor::zeros([tokens, d]),
            heads,
            proj,
            ffn: FeedForward::zeros(d, 2 * d),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        same_shape("encoder block", x, &self.pos)?;
        let xp = x.add(&self.pos)?;
        let attended = x.add(&multihead(&xp, &xp, x, self.heads, &self.proj)?)?;
        attended.add(&self.ffn.apply(&attended)?)
    }
}

/// Advances the variation token by one frame. The hybrid template carried
/// over from the previous frame becomes the new variation token, the stack
/// `[variation token; fused tokens]` runs through the encoder, and the
/// encoder's template rows become the new hybrid template. On the first
/// frame, when no hybrid template exists yet, the stored template tokens
/// stand in for the missing history.
///
/// `f_k` holds the fused tokens with the template rows first; it must carry
/// at least as many rows as the variation token so the template slice of
/// the encoder output is well defined. Returns the full encoder output so
/// the caller can slice out the search rows.
pub fn variation_token_step(
    state: &mut TrackerState,
    f_k: &Tensor,
    encoder: &EncoderBlock,
) -> Result<Tensor> {
    let vt = match &state.hybrid_template {
        Some(ht) => ht.clone(),
        None => state.template_features.clone(),
    };
    if vt.rank() != 2 || f_k.rank() != 2 || f_k.cols() != vt.cols() {
        return Err(Error::shape(
            "variation token step",
            format!("token rows {:?} vs fused rows {:?}", vt.shape(), f_k.shape()),
        ));
    }
    let n_t = vt.rows();
    if f_k.rows() < n_t {
        return Err(Error::shape(
            "variation token step",
            format!("fused set {:?} lacks {} template rows", f_k.shape(), n_t),
        ));
    }
    let stacked = Tensor::concat_rows(&[&vt, f_k])?;
    let f_next = encoder.apply(&stacked)?;
    state.hybrid_template = Some(f_next.slice_rows(n_t..2 * n_t));
    state.variation_token = Some(vt);
    Ok(f_next)
}

fn positions_for(part: &Tensor, pos: &Tensor, context: &'static str) -> Result<Tensor> {
    if part.rank() != 2 || part.cols() != pos.cols() {
        return Err(Error::shape(
            context,
            format!("token set {:?} vs positional table {:?}", part.shape(), pos.shape()),
        ));
    }
    if part.rows() == 0 {
        return Ok(Tensor::zeros([0, pos.cols()]));
    }
    if part.rows() != pos.rows() {
        return Err(Error::shape(
            context,
            format!("token set {:?} vs positional table {:?}", part.shape(), pos.shape()),
        ));
    }
    Ok(pos.clone())
}

/// Final rearranged cross-attention. The hybrid-template and search tokens
/// form the query stream; the keys and values concatenate the variation,
/// initial-template, hybrid-template, and search token sets in that order.
/// Positional tables enter queries and keys only. Empty token sets drop out
/// of the concatenation, so the attention degrades gracefully when parts of
/// the memory are absent. Returns the raw attention output with query rows
/// ordered `[hybrid template; search]`.
#[allow(clippy::too_many_arguments)]
pub fn rom_cross_attention(
    it: &Tensor,
    ht: &Tensor,
    sr: &Tensor,
    vt: &Tensor,
    pos_t: &Tensor,
    pos_s: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<Tensor> {
    let p_vt = positions_for(vt, pos_t, "cross-attention variation token")?;
    let p_it = positions_for(it, pos_t, "cross-attention initial template")?;
    let p_ht = positions_for(ht, pos_t, "cross-attention hybrid template")?;
    let p_sr = positions_for(sr, pos_s, "cross-attention search tokens")?;
    let q = Tensor::concat_rows(&[ht, sr])?;
    let pq = Tensor::concat_rows(&[&p_ht, &p_sr])?;
    let kv = Tensor::concat_rows(&[vt, it, ht, sr])?;
    let pk = Tensor::concat_rows(&[&p_vt, &p_it, &p_ht, &p_sr])?;
    multihead(&q.add(&pq)?, &kv.add(&pk)?, &kv, heads, proj)
}
