//! Forward ops and their hand-derived backward passes.
//!
//! No tape: each op exposes `forward` plus a `*_vjp` that maps an upstream
//! cotangent to input cotangents, recomputing intermediates as needed. All
//! passes here are exercised against central finite differences by the
//! registry in [`crate::grad`].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sign with the `sign(0) = 0` convention used by the gradient-sign attacks.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// matmul (internal workhorse)
// ---------------------------------------------------------------------------

/// `a [n,k] · b [k,m] -> [n,m]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            let brow = b.row(p);
            for j in 0..m {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new([n, m], out)
}

// ---------------------------------------------------------------------------
// softmax over rows
// ---------------------------------------------------------------------------

/// Row-wise softmax with max subtraction. Each output row sums to 1 and all
/// entries are strictly positive.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if logits.rank() != 2 || logits.cols() == 0 || logits.rows() == 0 {
        return Err(Error::shape(
            "softmax_rows",
            format!("need non-empty [n,m], got {:?}", logits.shape()),
        ));
    }
    let (n, m) = (logits.rows(), logits.cols());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let orow = &mut out[i * m..(i + 1) * m];
        let mut z = 0.0;
        for j in 0..m {
            let e = (row[j] - max).exp();
            orow[j] = e;
            z += e;
        }
        for v in orow.iter_mut() {
            *v /= z;
        }
    }
    Tensor::new([n, m], out)
}

/// Backward for [`softmax_rows`]: `dx_ij = y_ij (g_ij - sum_k g_ik y_ik)`.
pub fn softmax_rows_vjp(logits: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let y = softmax_rows(logits)?;
    if upstream.shape() != y.shape() {
        return Err(Error::shape(
            "softmax_rows_vjp",
            format!("upstream {:?} vs output {:?}", upstream.shape(), y.shape()),
        ));
    }
    let (n, m) = (y.rows(), y.cols());
    let mut dx = vec![0.0; n * m];
    for i in 0..n {
        let yr = y.row(i);
        let gr = upstream.row(i);
        let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        let drow = &mut dx[i * m..(i + 1) * m];
        for j in 0..m {
            drow[j] = yr[j] * (gr[j] - dot);
        }
    }
    Tensor::new([n, m], dx)
}

// ---------------------------------------------------------------------------
// scaled dot-product attention
// ---------------------------------------------------------------------------

fn attention_check(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize)> {
    if q.rank() != 2 || k.rank() != 2 || v.rank() != 2 {
        return Err(Error::shape("attention", "q/k/v must be rank 2".to_string()));
    }
    let d = q.cols();
    if d == 0 || k.cols() != d {
        return Err(Error::shape(
            "attention",
            format!("q {:?} vs k {:?}", q.shape(), k.shape()),
        ));
    }
    if v.rows() != k.rows() {
        return Err(Error::shape(
            "attention",
            format!("k {:?} vs v {:?}", k.shape(), v.shape()),
        ));
    }
    if k.rows() == 0 {
        return Err(Error::shape("attention", "empty key set".to_string()));
    }
    Ok((q.rows(), k.rows(), d))
}

/// `softmax(q kᵀ / √d) v` over row-token matrices.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (_, _, d) = attention_check(q, k, v)?;
    let scale = 1.0 / (d as f64).sqrt();
    let scores = matmul(q, &k.transpose2())?.scale(scale);
    let probs = softmax_rows(&scores)?;
    matmul(&probs, v)
}

/// Backward for [`attention`] w.r.t. `q`, `k`, `v`.
pub fn attention_vjp(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (nq, _, d) = attention_check(q, k, v)?;
    if upstream.rank() != 2 || upstream.rows() != nq || upstream.cols() != v.cols() {
        return Err(Error::shape(
            "attention_vjp",
            format!("upstream {:?}", upstream.shape()),
        ));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let scores = matmul(q, &k.transpose2())?.scale(scale);
    let probs = softmax_rows(&scores)?;

    let dv = matmul(&probs.transpose2(), upstream)?;
    let dprobs = matmul(upstream, &v.transpose2())?;
    let dscores = softmax_rows_vjp(&scores, &dprobs)?;
    let dq = matmul(&dscores, k)?.scale(scale);
    let dk = matmul(&dscores.transpose2(), q)?.scale(scale);
    Ok((dq, dk, dv))
}

// ---------------------------------------------------------------------------
// multi-head attention
// ---------------------------------------------------------------------------

/// Input/output projections for [`multihead`]; all `[d, d]`, no biases.
#[derive(Clone, Debug)]
pub struct MultiheadProjections {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
}

impl MultiheadProjections {
    /// Identity projections — handy in tests.
    pub fn identity(d: usize) -> Self {
        let eye = Tensor::from_fn([d, d], |i| if i / d == i % d { 1.0 } else { 0.0 });
        MultiheadProjections {
            wq: eye.clone(),
            wk: eye.clone(),
            wv: eye.clone(),
            wo: eye,
        }
    }

    pub fn seeded(d: usize, rng: &mut impl rand::Rng) -> Self {
        let a = 1.0 / (d as f64).sqrt();
        MultiheadProjections {
            wq: Tensor::rand_uniform([d, d], -a, a, rng),
            wk: Tensor::rand_uniform([d, d], -a, a, rng),
            wv: Tensor::rand_uniform([d, d], -a, a, rng),
            wo: Tensor::rand_uniform([d, d], -a, a, rng),
        }
    }
}

fn multihead_check(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<usize> {
    let (_, _, d) = attention_check(q, k, v)?;
    if v.cols() != d {
        return Err(Error::shape(
            "multihead",
            format!("v cols {} != d {}", v.cols(), d),
        ));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::shape(
            "multihead",
            format!("model dim {} not divisible by {} heads", d, heads),
        ));
    }
    for (name, w) in [
        ("wq", &proj.wq),
        ("wk", &proj.wk),
        ("wv", &proj.wv),
        ("wo", &proj.wo),
    ] {
        if w.rank() != 2 || w.rows() != d || w.cols() != d {
            return Err(Error::shape(
                "multihead",
                format!("{} must be [{d},{d}], got {:?}", name, w.shape()),
            ));
        }
    }
    Ok(d)
}

fn split_head(x: &Tensor, h: usize, dh: usize) -> Tensor {
    let n = x.rows();
    let mut data = Vec::with_capacity(n * dh);
    for i in 0..n {
        data.extend_from_slice(&x.row(i)[h * dh..(h + 1) * dh]);
    }
    Tensor::new([n, dh], data).expect("head slice")
}

fn merge_head(into: &mut Tensor, part: &Tensor, h: usize, dh: usize) {
    let n = part.rows();
    let cols = into.cols();
    for i in 0..n {
        let src = part.row(i).to_vec();
        into.row_mut(i)[h * dh..(h + 1) * dh].copy_from_slice(&src);
        let _ = cols;
    }
}

/// Multi-head attention: project, split columns into heads, run scaled
/// dot-product attention per head, concatenate, apply the output projection.
pub fn multihead(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
) -> Result<Tensor> {
    let d = multihead_check(q, k, v, heads, proj)?;
    let dh = d / heads;
    let qp = matmul(q, &proj.wq)?;
    let kp = matmul(k, &proj.wk)?;
    let vp = matmul(v, &proj.wv)?;
    let mut concat = Tensor::zeros([q.rows(), d]);
    for h in 0..heads {
        let out_h = attention(
            &split_head(&qp, h, dh),
            &split_head(&kp, h, dh),
            &split_head(&vp, h, dh),
        )?;
        merge_head(&mut concat, &out_h, h, dh);
    }
    matmul(&concat, &proj.wo)
}

/// Backward for [`multihead`] w.r.t. `q`, `k`, `v` (projections are fixed
/// parameters, never trained here).
pub fn multihead_vjp(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    heads: usize,
    proj: &MultiheadProjections,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let d = multihead_check(q, k, v, heads, proj)?;
    let dh = d / heads;
    let qp = matmul(q, &proj.wq)?;
    let kp = matmul(k, &proj.wk)?;
    let vp = matmul(v, &proj.wv)?;

    let dconcat = matmul(upstream, &proj.wo.transpose2())?;
    let mut dqp = Tensor::zeros([q.rows(), d]);
    let mut dkp = Tensor::zeros([k.rows(), d]);
    let mut dvp = Tensor::zeros([v.rows(), d]);
    for h in 0..heads {
        let (dq_h, dk_h, dv_h) = attention_vjp(
            &split_head(&qp, h, dh),
            &split_head(&kp, h, dh),
            &split_head(&vp, h, dh),
            &split_head(&dconcat, h, dh),
        )?;
        merge_head(&mut dqp, &dq_h, h, dh);
        merge_head(&mut dkp, &dk_h, h, dh);
        merge_head(&mut dvp, &dv_h, h, dh);
    }
    Ok((
        matmul(&dqp, &proj.wq.transpose2())?,
        matmul(&dkp, &proj.wk.transpose2())?,
        matmul(&dvp, &proj.wv.transpose2())?,
    ))
}

// ---------------------------------------------------------------------------
// valid 2-D cross-correlation, channels summed
// ---------------------------------------------------------------------------

/// `search [C,H,W] ⋆ kernel [C,h,w] -> [H-h+1, W-w+1]`, valid placement only,
/// kernel unflipped, channels summed.
///
/// The accumulation order is fixed (channel, then kernel row, then kernel
/// column) so results are bit-reproducible against a plain nested-loop
/// reference.
pub fn xcorr2d(search: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if search.rank() != 3 || kernel.rank() != 3 || search.dim(0) != kernel.dim(0) {
        return Err(Error::shape(
            "xcorr2d",
            format!("search {:?} vs kernel {:?}", search.shape(), kernel.shape()),
        ));
    }
    let (c, ih, iw) = (search.dim(0), search.dim(1), search.dim(2));
    let (kh, kw) = (kernel.dim(1), kernel.dim(2));
    if kh > ih || kw > iw || kh == 0 || kw == 0 {
        return Err(Error::shape(
            "xcorr2d",
            format!("kernel {}x{} does not fit search {}x{}", kh, kw, ih, iw),
        ));
    }
    let (oh, ow) = (ih - kh + 1, iw - kw + 1);
    let sdata = search.data();
    let kdata = kernel.data();
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for ch in 0..c {
                let sbase = ch * ih * iw;
                let kbase = ch * kh * kw;
                for i in 0..kh {
                    let srow = &sdata[sbase + (y + i) * iw + x..sbase + (y + i) * iw + x + kw];
                    let krow = &kdata[kbase + i * kw..kbase + (i + 1) * kw];
                    for j in 0..kw {
                        acc += srow[j] * krow[j];
                    }
                }
            }
            out[y * ow + x] = acc;
        }
    }
    Tensor::new([oh, ow], out)
}

/// Backward for [`xcorr2d`] w.r.t. both inputs.
pub fn xcorr2d_vjp(
    search: &Tensor,
    kernel: &Tensor,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (c, ih, iw) = (search.dim(0), search.dim(1), search.dim(2));
    let (kh, kw) = (kernel.dim(1), kernel.dim(2));
    let (oh, ow) = (ih - kh + 1, iw - kw + 1);
    if upstream.rank() != 2 || upstream.dim(0) != oh || upstream.dim(1) != ow {
        return Err(Error::shape(
            "xcorr2d_vjp",
            format!("upstream {:?}, want [{},{}]", upstream.shape(), oh, ow),
        ));
    }
    let sdata = search.data();
    let kdata = kernel.data();
    let g = upstream.data();
    let mut dsearch = vec![0.0; sdata.len()];
    let mut dkernel = vec![0.0; kdata.len()];
    for y in 0..oh {
        for x in 0..ow {
            let gv = g[y * ow + x];
            if gv == 0.0 {
                continue;
            }
            for ch in 0..c {
                let sbase = ch * ih * iw;
                let kbase = ch * kh * kw;
                for i in 0..kh {
                    let soff = sbase + (y + i) * iw + x;
                    let koff = kbase + i * kw;
                    for j in 0..kw {
                        dsearch[soff + j] += gv * kdata[koff + j];
                        dkernel[koff + j] += gv * sdata[soff + j];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new([c, ih, iw], dsearch)?,
        Tensor::new([c, kh, kw], dkernel)?,
    ))
}

// ---------------------------------------------------------------------------
// small convolution pieces for the tracker backbones
// ---------------------------------------------------------------------------

/// Plain valid convolution (correlation orientation), stride 1:
/// `input [Cin,H,W] * weight [Cout,Cin,kh,kw] -> [Cout,H-kh+1,W-kw+1]`.
pub fn conv2d(input: &Tensor, weight: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 || weight.rank() != 4 || weight.dim(1) != input.dim(0) {
        return Err(Error::shape(
            "conv2d",
            format!("input {:?} vs weight {:?}", input.shape(), weight.shape()),
        ));
    }
    let (cin, ih, iw) = (input.dim(0), input.dim(1), input.dim(2));
    let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
    if kh > ih || kw > iw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {}x{} vs input {}x{}", kh, kw, ih, iw),
        ));
    }
    let (oh, ow) = (ih - kh + 1, iw - kw + 1);
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        let obase = co * oh * ow;
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = 0.0;
                for ci in 0..cin {
                    let xbase = ci * ih * iw;
                    let wbase = co * cin * kh * kw + ci * kh * kw;
                    for i in 0..kh {
                        let xrow = &x[xbase + (y + i) * iw + xo..xbase + (y + i) * iw + xo + kw];
                        let wrow = &w[wbase + i * kw..wbase + (i + 1) * kw];
                        for j in 0..kw {
                            acc += xrow[j] * wrow[j];
                        }
                    }
                }
                out[obase + y * ow + xo] = acc;
            }
        }
    }
    Tensor::new([cout, oh, ow], out)
}

/// Backward of [`conv2d`] w.r.t. the input (weights are fixed).
pub fn conv2d_vjp_input(input_shape: &[usize], weight: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (cin, ih, iw) = (input_shape[0], input_shape[1], input_shape[2]);
    let (cout, kh, kw) = (weight.dim(0), weight.dim(2), weight.dim(3));
    let (oh, ow) = (ih - kh + 1, iw - kw + 1);
    if upstream.rank() != 3
        || upstream.dim(0) != cout
        || upstream.dim(1) != oh
        || upstream.dim(2) != ow
    {
        return Err(Error::shape(
            "conv2d_vjp_input",
            format!("upstream {:?}, want [{},{},{}]", upstream.shape(), cout, oh, ow),
        ));
    }
    let w = weight.data();
    let g = upstream.data();
    let mut dx = vec![0.0; cin * ih * iw];
    for co in 0..cout {
        let gbase = co * oh * ow;
        for y in 0..oh {
            for xo in 0..ow {
                let gv = g[gbase + y * ow + xo];
                if gv == 0.0 {
                    continue;
                }
                for ci in 0..cin {
                    let xbase = ci * ih * iw;
                    let wbase = co * cin * kh * kw + ci * kh * kw;
                    for i in 0..kh {
                        let doff = xbase + (y + i) * iw + xo;
                        let woff = wbase + i * kw;
                        for j in 0..kw {
                            dx[doff + j] += gv * w[woff + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new([cin, ih, iw], dx)
}

/// Pointwise channel mix: `input [Cin,H,W] x weight [Cout,Cin] -> [Cout,H,W]`.
pub fn conv1x1(input: &Tensor, weight: &Tensor) -> Result<Tensor> {
    if input.rank() != 3 || weight.rank() != 2 || weight.cols() != input.dim(0) {
        return Err(Error::shape(
            "conv1x1",
            format!("input {:?} vs weight {:?}", input.shape(), weight.shape()),
        ));
    }
    let (cin, h, w) = (input.dim(0), input.dim(1), input.dim(2));
    let cout = weight.rows();
    let hw = h * w;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; cout * hw];
    for co in 0..cout {
        let obase = co * hw;
        for ci in 0..cin {
            let coeff = wt[co * cin + ci];
            if coeff == 0.0 {
                continue;
            }
            let xbase = ci * hw;
            for p in 0..hw {
                out[obase + p] += coeff * x[xbase + p];
            }
        }
    }
    Tensor::new([cout, h, w], out)
}

/// Backward of [`conv1x1`] w.r.t. the input.
pub fn conv1x1_vjp_input(weight: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (cout, cin) = (weight.rows(), weight.cols());
    if upstream.rank() != 3 || upstream.dim(0) != cout {
        return Err(Error::shape(
            "conv1x1_vjp_input",
            format!("upstream {:?}", upstream.shape()),
        ));
    }
    let (h, w) = (upstream.dim(1), upstream.dim(2));
    let hw = h * w;
    let g = upstream.data();
    let wt = weight.data();
    let mut dx = vec![0.0; cin * hw];
    for co in 0..cout {
        let gbase = co * hw;
        for ci in 0..cin {
            let coeff = wt[co * cin + ci];
            if coeff == 0.0 {
                continue;
            }
            let dbase = ci * hw;
            for p in 0..hw {
                dx[dbase + p] += coeff * g[gbase + p];
            }
        }
    }
    Tensor::new([cin, h, w], dx)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Backward of [`relu`]; the subgradient at exactly 0 is taken as 0.
pub fn relu_vjp(x: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    x.zip_map(upstream, |xv, g| if xv > 0.0 { g } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng::stream(11, &[rng::tag("softmax")]);
        let x = Tensor::rand_uniform([5, 7], -6.0, 6.0, &mut r);
        let y = softmax_rows(&x).unwrap();
        for i in 0..5 {
            let s: f64 = y.row(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {} sums to {}", i, s);
            assert!(y.row(i).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(softmax_rows(&Tensor::zeros([0, 3])).is_err());
        assert!(softmax_rows(&Tensor::zeros([3, 0])).is_err());
    }

    #[test]
    fn attention_single_key_returns_value_row() {
        let mut r = rng::stream(3, &[rng::tag("attn1key")]);
        let q = Tensor::rand_uniform([4, 3], -2.0, 2.0, &mut r);
        let k = Tensor::rand_uniform([1, 3], -2.0, 2.0, &mut r);
        let v = Tensor::rand_uniform([1, 3], -2.0, 2.0, &mut r);
        let out = attention(&q, &k, &v).unwrap();
        for i in 0..4 {
            assert_eq!(out.row(i), v.row(0), "query {} must copy the single value row", i);
        }
    }

    #[test]
    fn attention_rejects_mismatched_kv() {
        let q = Tensor::zeros([2, 4]);
        let k = Tensor::zeros([3, 4]);
        let v = Tensor::zeros([2, 4]);
        assert!(attention(&q, &k, &v).is_err());
    }

    #[test]
    fn multihead_identity_matches_per_head_attention() {
        // Two heads with identity projections must agree with two separate
        // attention calls on the column halves.
        let mut r = rng::stream(5, &[rng::tag("mh")]);
        let q = Tensor::rand_uniform([3, 4], -1.5, 1.5, &mut r);
        let k = Tensor::rand_uniform([5, 4], -1.5, 1.5, &mut r);
        let v = Tensor::rand_uniform([5, 4], -1.5, 1.5, &mut r);
        let proj = MultiheadProjections::identity(4);
        let got = multihead(&q, &k, &v, 2, &proj).unwrap();

        let cols = |t: &Tensor, r0: usize, r1: usize| {
            let mut data = Vec::new();
            for i in 0..t.rows() {
                data.extend_from_slice(&t.row(i)[r0..r1]);
            }
            Tensor::new([t.rows(), r1 - r0], data).unwrap()
        };
        let h0 = attention(&cols(&q, 0, 2), &cols(&k, 0, 2), &cols(&v, 0, 2)).unwrap();
        let h1 = attention(&cols(&q, 2, 4), &cols(&k, 2, 4), &cols(&v, 2, 4)).unwrap();
        for i in 0..3 {
            assert_eq!(&got.row(i)[0..2], h0.row(i));
            assert_eq!(&got.row(i)[2..4], h1.row(i));
        }
    }

    #[test]
    fn multihead_zero_values_zero_output() {
        let mut r = rng::stream(6, &[rng::tag("mh0")]);
        let q = Tensor::rand_uniform([3, 4], -1.0, 1.0, &mut r);
        let k = Tensor::rand_uniform([4, 4], -1.0, 1.0, &mut r);
        let v = Tensor::zeros([4, 4]);
        let proj = MultiheadProjections::seeded(4, &mut r);
        let out = multihead(&q, &k, &v, 2, &proj).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn multihead_rejects_bad_head_count() {
        let q = Tensor::zeros([2, 6]);
        let proj = MultiheadProjections::identity(6);
        assert!(multihead(&q, &q, &q, 4, &proj).is_err());
        assert!(multihead(&q, &q, &q, 0, &proj).is_err());
    }

    #[test]
    fn xcorr_identity_kernel_single_pixel() {
        // 1x1 kernel of value 1 on one channel copies the search plane.
        let mut r = rng::stream(9, &[rng::tag("xcorr")]);
        let s = Tensor::rand_uniform([1, 4, 5], -3.0, 3.0, &mut r);
        let k = Tensor::new([1, 1, 1], vec![1.0]).unwrap();
        let out = xcorr2d(&s, &k).unwrap();
        assert_eq!(out.data(), s.data());
    }

    #[test]
    fn xcorr_single_position_is_dot_product() {
        let mut r = rng::stream(10, &[rng::tag("xcorr-dot")]);
        let s = Tensor::rand_uniform([2, 3, 3], -2.0, 2.0, &mut r);
        let k = Tensor::rand_uniform([2, 3, 3], -2.0, 2.0, &mut r);
        let out = xcorr2d(&s, &k).unwrap();
        assert_eq!(out.shape(), &[1, 1]);
        // Same accumulation order as the op itself.
        let mut want = 0.0;
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    want += s.at(&[c, i, j]) * k.at(&[c, i, j]);
                }
            }
        }
        assert_eq!(out.data()[0], want);
    }

    #[test]
    fn xcorr_rejects_oversized_kernel() {
        let s = Tensor::zeros([1, 2, 2]);
        let k = Tensor::zeros([1, 3, 3]);
        assert!(xcorr2d(&s, &k).is_err());
    }

    #[test]
    fn conv1x1_matches_manual_mix() {
        let x = Tensor::new([2, 1, 2], vec![1.0, 2.0, 10.0, 20.0]).unwrap();
        let w = Tensor::new([1, 2], vec![0.5, 2.0]).unwrap();
        let y = conv1x1(&x, &w).unwrap();
        assert_eq!(y.data(), &[0.5 + 20.0, 1.0 + 40.0]);
    }

    #[test]
    fn sign_zero_is_zero() {
        assert_eq!(sign(0.0), 0.0);
        assert_eq!(sign(3.5), 1.0);
        assert_eq!(sign(-0.2), -1.0);
    }

    #[test]
    fn matmul_identity() {
        let mut r = rng::stream(12, &[rng::tag("mm")]);
        let a = Tensor::rand_uniform([3, 3], -1.0, 1.0, &mut r);
        let eye = Tensor::from_fn([3, 3], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        assert_eq!(matmul(&a, &eye).unwrap(), a);
        let _ = r.gen::<u64>();
    }
}
