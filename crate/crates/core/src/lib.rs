//! Desk-scale robustness harness for visual object trackers.
//!
//! The crate bundles everything needed to measure how a handful of classic
//! perturbation attacks degrade two small, fully self-contained trackers:
//!
//! * [`tensor`] / [`ops`] / [`grad`] — dense f64 tensors, the forward ops the
//!   trackers are built from, hand-derived backward passes, and a
//!   finite-difference gradient checker with an op registry.
//! * [`trackers`] — a correlation tracker with an anchor head (`siamcorr`)
//!   and a token-mixing transformer tracker (`tinyformer`), plus the shared
//!   region cropping and attention building blocks.
//! * [`attacks`] — RTAA, SPARK, IoU, and CSA attacks with a uniform
//!   per-sequence session wrapper and applicability checks.
//! * [`metrics`] — SSIM / L1 perturbation diagnostics.
//! * [`eval`] — one-pass (success/precision) and re-initialization (anchor)
//!   protocols with their summary metrics.
//! * [`synth`] / [`dataset`] — deterministic synthetic sequences and their
//!   on-disk PPM/PGM layout.
//! * [`harness`] — glue that runs a tracker (optionally under attack) over a
//!   sequence and collects overlaps plus perturbation diagnostics.
//!
//! Everything is seeded: identical seeds give bit-identical frames, weights,
//! perturbations, and metrics.

pub mod attacks;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geom;
pub mod grad;
pub mod harness;
pub mod img;
pub mod metrics;
pub mod ops;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod trackers;

pub use error::{Error, Result};
pub use tensor::Tensor;
