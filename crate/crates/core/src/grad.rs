//! Finite-difference gradient checking against the hand-derived backward
//! passes.
//!
//! Ops register a forward closure, a vector-Jacobian product, and a random
//! point sampler. `grad_check` scalarizes the op output with a fixed random
//! weighting, then compares the analytic input gradients against central
//! differences coordinate by coordinate.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ops;
use crate::rng;
use crate::tensor::Tensor;

/// Gradient of one input slot, in slot order.
#[derive(Clone, Debug)]
pub struct GradientRecord {
    pub slot: usize,
    pub grad: Tensor,
}

/// Outcome of one `grad_check` call.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub op: String,
    pub max_rel_err: f64,
    pub pass: bool,
    pub tol: f64,
    /// Coordinates actually probed with finite differences.
    pub coords_checked: usize,
    /// (input slot, flat index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
}

type ForwardFn = Box<dyn Fn(&[Tensor]) -> Result<Tensor> + Send + Sync>;
type VjpFn = Box<dyn Fn(&[Tensor], &Tensor) -> Result<Vec<GradientRecord>> + Send + Sync>;
type SampleFn = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor> + Send + Sync>;

/// A differentiable op as the checker sees it.
pub struct DiffOp {
    pub forward: ForwardFn,
    pub vjp: VjpFn,
    pub sample: SampleFn,
}

/// Exhaustive finite differences up to this many input coordinates; beyond
/// it, a seeded subset of this size is probed instead (tracker losses take
/// whole search regions as input — probing all ~1.7k pixels per point would
/// dominate the suite's runtime without telling us more).
pub const MAX_EXHAUSTIVE_COORDS: usize = 256;

/// Differences below this are treated as zero when forming relative errors,
/// so float cancellation noise on flat coordinates cannot fail a check.
const ABS_NOISE_FLOOR: f64 = 1e-7;

#[derive(Default)]
pub struct OpRegistry {
    ops: BTreeMap<String, DiffOp>,
}

impl OpRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry pre-loaded with every core op that carries a backward pass.
    pub fn standard() -> Self {
        let mut reg = Self::new();

        reg.register(
            "softmax_rows",
            DiffOp {
                forward: Box::new(|xs| ops::softmax_rows(&xs[0])),
                vjp: Box::new(|xs, up| {
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: ops::softmax_rows_vjp(&xs[0], up)?,
                    }])
                }),
                sample: Box::new(|r| vec![Tensor::rand_uniform([3, 5], -4.0, 4.0, r)]),
            },
        );

        reg.register(
            "attention",
            DiffOp {
                forward: Box::new(|xs| ops::attention(&xs[0], &xs[1], &xs[2])),
                vjp: Box::new(|xs, up| {
                    let (dq, dk, dv) = ops::attention_vjp(&xs[0], &xs[1], &xs[2], up)?;
                    Ok(vec![
                        GradientRecord { slot: 0, grad: dq },
                        GradientRecord { slot: 1, grad: dk },
                        GradientRecord { slot: 2, grad: dv },
                    ])
                }),
                sample: Box::new(|r| {
                    vec![
                        Tensor::rand_uniform([3, 4], -2.0, 2.0, r),
                        Tensor::rand_uniform([5, 4], -2.0, 2.0, r),
                        Tensor::rand_uniform([5, 4], -2.0, 2.0, r),
                    ]
                }),
            },
        );

        // Multihead uses fixed seeded projections; only q/k/v are inputs.
        let proj = {
            let mut r = rng::stream(0x6d68, &[rng::tag("multihead-proj")]);
            ops::MultiheadProjections::seeded(4, &mut r)
        };
        let proj_f = proj.clone();
        let proj_b = proj;
        reg.register(
            "multihead",
            DiffOp {
                forward: Box::new(move |xs| ops::multihead(&xs[0], &xs[1], &xs[2], 2, &proj_f)),
                vjp: Box::new(move |xs, up| {
                    let (dq, dk, dv) =
                        ops::multihead_vjp(&xs[0], &xs[1], &xs[2], 2, &proj_b, up)?;
                    Ok(vec![
                        GradientRecord { slot: 0, grad: dq },
                        GradientRecord { slot: 1, grad: dk },
                        GradientRecord { slot: 2, grad: dv },
                    ])
                }),
                sample: Box::new(|r| {
                    vec![
                        Tensor::rand_uniform([3, 4], -1.5, 1.5, r),
                        Tensor::rand_uniform([6, 4], -1.5, 1.5, r),
                        Tensor::rand_uniform([6, 4], -1.5, 1.5, r),
                    ]
                }),
            },
        );

        reg.register(
            "xcorr2d",
            DiffOp {
                forward: Box::new(|xs| ops::xcorr2d(&xs[0], &xs[1])),
                vjp: Box::new(|xs, up| {
                    let (ds, dk) = ops::xcorr2d_vjp(&xs[0], &xs[1], up)?;
                    Ok(vec![
                        GradientRecord { slot: 0, grad: ds },
                        GradientRecord { slot: 1, grad: dk },
                    ])
                }),
                sample: Box::new(|r| {
                    vec![
                        Tensor::rand_uniform([2, 6, 6], -2.0, 2.0, r),
                        Tensor::rand_uniform([2, 3, 3], -2.0, 2.0, r),
                    ]
                }),
            },
        );

        let convw = {
            let mut r = rng::stream(0x6377, &[rng::tag("conv-weight")]);
            Tensor::rand_uniform([3, 2, 3, 3], -0.5, 0.5, &mut r)
        };
        let convw_b = convw.clone();
        reg.register(
            "conv2d",
            DiffOp {
                forward: Box::new(move |xs| ops::conv2d(&xs[0], &convw)),
                vjp: Box::new(move |xs, up| {
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: ops::conv2d_vjp_input(xs[0].shape(), &convw_b, up)?,
                    }])
                }),
                sample: Box::new(|r| vec![Tensor::rand_uniform([2, 6, 6], -2.0, 2.0, r)]),
            },
        );

        let mixw = {
            let mut r = rng::stream(0x3131, &[rng::tag("mix-weight")]);
            Tensor::rand_uniform([4, 3], -0.8, 0.8, &mut r)
        };
        let mixw_b = mixw.clone();
        reg.register(
            "conv1x1",
            DiffOp {
                forward: Box::new(move |xs| ops::conv1x1(&xs[0], &mixw)),
                vjp: Box::new(move |xs, up| {
                    let _ = xs;
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: ops::conv1x1_vjp_input(&mixw_b, up)?,
                    }])
                }),
                sample: Box::new(|r| vec![Tensor::rand_uniform([3, 4, 4], -2.0, 2.0, r)]),
            },
        );

        reg.register(
            "relu",
            DiffOp {
                forward: Box::new(|xs| Ok(ops::relu(&xs[0]))),
                vjp: Box::new(|xs, up| {
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: ops::relu_vjp(&xs[0], up)?,
                    }])
                }),
                // Offset away from the kink at 0 so finite differences never
                // straddle it.
                sample: Box::new(|r| {
                    vec![Tensor::from_fn([4, 5], |_| {
                        let mag = r.gen_range(0.05..2.0);
                        if r.gen::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    })]
                }),
            },
        );

        reg
    }

    pub fn register(&mut self, name: &str, op: DiffOp) {
        self.ops.insert(name.to_string(), op);
    }

    pub fn names(&self) -> Vec<String> {
        self.ops.keys().cloned().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.ops.contains_key(name)
    }

    /// Draw a random evaluation point for `op_id`.
    pub fn sample_point(&self, op_id: &str, rng: &mut ChaCha8Rng) -> Result<Vec<Tensor>> {
        let op = self
            .ops
            .get(op_id)
            .ok_or_else(|| Error::UnknownOp(op_id.to_string()))?;
        Ok((op.sample)(rng))
    }

    /// Compare the analytic gradient against central finite differences at
    /// `point`, probing every input coordinate (or a seeded subset for large
    /// inputs). Passes iff the max relative error is within `tol`.
    pub fn grad_check(&self, op_id: &str, point: &[Tensor], step: f64, tol: f64) -> Result<CheckReport> {
        let op = self
            .ops
            .get(op_id)
            .ok_or_else(|| Error::UnknownOp(op_id.to_string()))?;
        if step <= 0.0 || tol <= 0.0 {
            return Err(Error::Config(format!(
                "grad_check needs positive step/tol, got {} / {}",
                step, tol
            )));
        }

        let y = (op.forward)(point)?;
        // Fixed weighting, bounded away from zero so no output coordinate is
        // accidentally ignored.
        let mut wr = rng::stream(rng::tag(op_id), &[rng::tag("scalarize")]);
        let weights = Tensor::from_fn(y.shape().to_vec(), |_| {
            let mag = wr.gen_range(0.25..1.0);
            if wr.gen::<bool>() {
                mag
            } else {
                -mag
            }
        });

        let mut analytic = (op.vjp)(point, &weights)?;
        analytic.sort_by_key(|g| g.slot);
        if analytic.len() != point.len() {
            return Err(Error::shape(
                "grad_check",
                format!(
                    "vjp returned {} records for {} inputs",
                    analytic.len(),
                    point.len()
                ),
            ));
        }

        // Candidate coordinates: (slot, flat index).
        let mut coords: Vec<(usize, usize)> = Vec::new();
        for (slot, t) in point.iter().enumerate() {
            for i in 0..t.len() {
                coords.push((slot, i));
            }
        }
        if coords.len() > MAX_EXHAUSTIVE_COORDS {
            let mut cr = rng::stream(rng::tag(op_id), &[rng::tag("coords")]);
            // Partial Fisher-Yates: first MAX_EXHAUSTIVE_COORDS entries.
            let n = coords.len();
            for i in 0..MAX_EXHAUSTIVE_COORDS {
                let j = i + cr.gen_range(0..n - i);
                coords.swap(i, j);
            }
            coords.truncate(MAX_EXHAUSTIVE_COORDS);
        }

        let scalar = |inputs: &[Tensor]| -> Result<f64> {
            let out = (op.forward)(inputs)?;
            out.dot(&weights)
        };

        let mut max_rel = 0.0f64;
        let mut worst = None;
        let mut work: Vec<Tensor> = point.to_vec();
        for &(slot, idx) in &coords {
            let orig = work[slot].data()[idx];
            work[slot].data_mut()[idx] = orig + step;
            let fp = scalar(&work)?;
            work[slot].data_mut()[idx] = orig - step;
            let fm = scalar(&work)?;
            work[slot].data_mut()[idx] = orig;

            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic[slot].grad.data()[idx];
            let diff = (a - numeric).abs();
            let rel = if diff <= ABS_NOISE_FLOOR {
                0.0
            } else {
                diff / a.abs().max(numeric.abs())
            };
            if rel > max_rel {
                max_rel = rel;
                worst = Some((slot, idx));
            }
        }

        Ok(CheckReport {
            op: op_id.to_string(),
            max_rel_err: max_rel,
            pass: max_rel <= tol,
            tol,
            coords_checked: coords.len(),
            worst,
        })
    }

    /// Run `grad_check` at `points` seeded random points for one op.
    pub fn check_op(
        &self,
        op_id: &str,
        points: usize,
        step: f64,
        tol: f64,
        seed: u64,
    ) -> Result<Vec<CheckReport>> {
        let mut reports = Vec::with_capacity(points);
        for p in 0..points {
            let mut r = rng::stream(seed, &[rng::tag(op_id), p as u64]);
            let point = self.sample_point(op_id, &mut r)?;
            reports.push(self.grad_check(op_id, &point, step, tol)?);
        }
        Ok(reports)
    }

    /// Full sweep over every registered op.
    pub fn check_all(
        &self,
        points: usize,
        step: f64,
        tol: f64,
        seed: u64,
    ) -> Result<Vec<CheckReport>> {
        let mut reports = Vec::new();
        for name in self.names() {
            reports.extend(self.check_op(&name, points, step, tol, seed)?);
        }
        Ok(reports)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_for(reg: &OpRegistry, op: &str, variant: u64) -> Vec<Tensor> {
        let mut r = rng::stream(42, &[rng::tag(op), variant]);
        reg.sample_point(op, &mut r).unwrap()
    }

    #[test]
    fn unknown_op_is_a_lookup_error() {
        let reg = OpRegistry::standard();
        match reg.grad_check("nope", &[], 1e-5, 1e-4) {
            Err(Error::UnknownOp(name)) => assert_eq!(name, "nope"),
            other => panic!("expected UnknownOp, got {:?}", other.map(|r| r.op)),
        }
    }

    #[test]
    fn softmax_passes_at_random_point() {
        let reg = OpRegistry::standard();
        let point = point_for(&reg, "softmax_rows", 0);
        let rep = reg.grad_check("softmax_rows", &point, 1e-5, 1e-4).unwrap();
        assert!(rep.pass, "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn constant_function_passes_with_zero_gradients() {
        let mut reg = OpRegistry::new();
        reg.register(
            "constant",
            DiffOp {
                forward: Box::new(|_| Ok(Tensor::full([2, 2], 3.25))),
                vjp: Box::new(|xs, _| {
                    Ok(vec![GradientRecord {
                        slot: 0,
                        grad: Tensor::zeros(xs[0].shape().to_vec()),
                    }])
                }),
                sample: Box::new(|r| vec![Tensor::rand_uniform([3, 3], -1.0, 1.0, r)]),
            },
        );
        let point = point_for(&reg, "constant", 0);
        let rep = reg.grad_check("constant", &point, 1e-5, 1e-4).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_rel_err, 0.0);
    }

    #[test]
    fn negated_backward_fails_with_rel_err_near_two() {
        let mut reg = OpRegistry::new();
        reg.register(
            "attention_negated",
            DiffOp {
                forward: Box::new(|xs| ops::attention(&xs[0], &xs[1], &xs[2])),
                vjp: Box::new(|xs, up| {
                    let (dq, dk, dv) = ops::attention_vjp(&xs[0], &xs[1], &xs[2], up)?;
                    Ok(vec![
                        GradientRecord { slot: 0, grad: dq.scale(-1.0) },
                        GradientRecord { slot: 1, grad: dk.scale(-1.0) },
                        GradientRecord { slot: 2, grad: dv.scale(-1.0) },
                    ])
                }),
                sample: Box::new(|r| {
                    vec![
                        Tensor::rand_uniform([3, 4], -2.0, 2.0, r),
                        Tensor::rand_uniform([5, 4], -2.0, 2.0, r),
                        Tensor::rand_uniform([5, 4], -2.0, 2.0, r),
                    ]
                }),
            },
        );
        let point = point_for(&reg, "attention_negated", 0);
        let rep = reg
            .grad_check("attention_negated", &point, 1e-5, 1e-4)
            .unwrap();
        assert!(!rep.pass);
        assert!(
            (rep.max_rel_err - 2.0).abs() < 0.05,
            "sign flip should give rel err ~2, got {}",
            rep.max_rel_err
        );
    }

    #[test]
    fn every_standard_op_passes_at_five_points() {
        let reg = OpRegistry::standard();
        for rep in reg.check_all(5, 1e-5, 1e-4, 1234).unwrap() {
            assert!(
                rep.pass,
                "{} failed grad check: max rel err {} at {:?}",
                rep.op, rep.max_rel_err, rep.worst
            );
        }
    }
}
