//! Experiment runner and reporting layer.
//!
//! Ties the core library's trackers, attacks, and protocols into
//! configurable experiments: [`config`] parses and validates the TOML
//! experiment schema, [`runner`] executes clean/attacked run pairs
//! deterministically (with bounded parallelism and per-sequence budgets),
//! [`report`] serializes results into CSV tables, curve files, and a
//! structured JSON dump, and [`reference`] carries the published
//! robustness numbers the reporting layer can re-derive drops from.

pub mod config;
pub mod reference;
pub mod report;
pub mod runner;
