//! Experiment execution: paired clean/attacked runs over a sequence suite.
//!
//! Every sequence is evaluated clean first and attacked second (when an
//! attack is configured), under the same dataset, tracker weights, and
//! per-sequence derived seeds, so drop percentages isolate the attack's
//! effect. Sequences are dispatched to a bounded worker pool and the
//! results are folded in dataset order regardless of completion order;
//! the whole run is a pure function of (config, master seed).

use std::collections::BTreeMap;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use advtrack_core::attacks::{AttackConfig, AttackId, AttackSession};
use advtrack_core::error::{Error, Result};
use advtrack_core::dataset;
use advtrack_core::eval::{
    anchor_evaluate, anchor_metrics, ao_sr, auc, drop_percentage, norm_precision, ope_run,
    precision_at, precision_curve, success_curve, MetricBundle, OverlapMode, ScriptedTracker,
    SequenceTracker,
};
use advtrack_core::harness::TrackRunner;
use advtrack_core::metrics::PerturbDiagnostics;
use advtrack_core::rng;
use advtrack_core::synth::{self, SequenceRecord};
use advtrack_core::trackers::AnyTracker;

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::report::{
    AggregateReport, DiagSummary, EvaluationReport, FrameDiag, Provenance, SequenceReport,
};

/// Perturbation-budget grid for level sweeps (max-norm attacks).
pub const EPSILON_GRID: [f64; 5] = [2.55, 5.1, 10.2, 20.4, 40.8];
/// Noise-budget grid for L1 sweeps (the spatial-constraint attack).
pub const ZETA_GRID: [f64; 3] = [8000.0, 10000.0, 12000.0];

/// Which attack knob a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    Zeta,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Zeta => "zeta",
        }
    }

    pub fn grid(self) -> &'static [f64] {
        match self {
            SweepParam::Epsilon => &EPSILON_GRID,
            SweepParam::Zeta => &ZETA_GRID,
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepParam::Epsilon),
            "zeta" => Ok(SweepParam::Zeta),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected epsilon or zeta)"
            ))),
        }
    }
}

/// Load the configured dataset: a saved directory or a synthesized suite.
pub fn load_dataset(cfg: &DatasetConfig) -> Result<Vec<SequenceRecord>> {
    match (&cfg.path, &cfg.synth) {
        (Some(path), None) => dataset::load_suite(path),
        (None, Some(spec)) => synth::standard_suite(&(*spec).into()),
        _ => Err(Error::Config(
            "dataset needs exactly one of path or synth spec".into(),
        )),
    }
}

/// Everything one protocol pass produces for one sequence.
struct ProtocolOutcome {
    bundle: MetricBundle,
    overlaps: Vec<f64>,
    center_errors: Vec<f64>,
    diags: Vec<PerturbDiagnostics>,
    checksum: Option<String>,
}

fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn ope_bundle(
    overlaps: &[f64],
    center_errors: &[f64],
    norm_center_errors: &[f64],
) -> Result<MetricBundle> {
    let (ao, sr_050, sr_075) = ao_sr(overlaps)?;
    Ok(MetricBundle {
        auc: auc(&success_curve(overlaps)?)?,
        precision_at_20: precision_at(&precision_curve(center_errors)?, 20)?,
        norm_precision: norm_precision(norm_center_errors)?,
        ao,
        sr_050,
        sr_075,
        ..Default::default()
    })
}

fn run_protocol(
    cfg: &ExperimentConfig,
    tracker: Option<&AnyTracker>,
    seq: &SequenceRecord,
    session: Option<AttackSession>,
    mode: OverlapMode,
) -> Result<ProtocolOutcome> {
    let attacked = session.is_some();
    let mut hasher = Sha256::new();
    let budget = Duration::from_secs(cfg.run.timeout_sec);
    let (bundle, overlaps, center_errors, diags) = {
        // No model tracker means ground-truth replay (never attacked —
        // config validation enforces that).
        let mut scripted;
        let mut model = None;
        let driver: &mut dyn SequenceTracker = match tracker {
            None => {
                scripted = ScriptedTracker::perfect(seq);
                &mut scripted
            }
            Some(t) => {
                let mut runner = match session {
                    Some(s) => TrackRunner::attacked(t, s),
                    None => TrackRunner::clean(t),
                }
                .with_budget(budget);
                if attacked {
                    let h = &mut hasher;
                    runner = runner.with_sink(Box::new(move |p| {
                        for v in p.values.data() {
                            h.update(v.to_le_bytes());
                        }
                    }));
                }
                model.insert(runner)
            }
        };
        let (bundle, overlaps, center_errors) = match cfg.protocol.id.as_str() {
            "ope" => {
                let res = ope_run(driver, seq, mode)?;
                let overlaps = match mode {
                    OverlapMode::Box => res.overlaps.clone(),
                    OverlapMode::Mask => res.mask_overlaps.clone(),
                };
                let bundle = ope_bundle(&overlaps, &res.center_errors, &res.norm_center_errors)?;
                (bundle, overlaps, res.center_errors)
            }
            "anchor" => {
                let runs = anchor_evaluate(
                    driver,
                    seq,
                    &seq.anchors,
                    mode,
                    cfg.protocol.failure_threshold,
                )?;
                let horizon = cfg.protocol.eao_horizon.unwrap_or(seq.frames.len());
                (anchor_metrics(&runs, horizon)?, Vec::new(), Vec::new())
            }
            other => return Err(Error::Config(format!("unknown protocol {other:?}"))),
        };
        let diags = model
            .as_mut()
            .map(|m| m.drain_diagnostics())
            .unwrap_or_default();
        (bundle, overlaps, center_errors, diags)
    };
    Ok(ProtocolOutcome {
        bundle,
        overlaps,
        center_errors,
        diags,
        checksum: attacked.then(|| hex_digest(hasher)),
    })
}

fn diag_summary(diags: &[PerturbDiagnostics]) -> Option<DiagSummary> {
    if diags.is_empty() {
        return None;
    }
    let n = diags.len() as f64;
    Some(DiagSummary {
        mean_ssim: diags.iter().map(|d| d.ssim).sum::<f64>() / n,
        mean_l1: diags.iter().map(|d| d.l1).sum::<f64>() / n,
        super_perturbed: diags.iter().filter(|d| d.super_perturbed).count(),
        frames: diags.len(),
    })
}

fn drops_between(
    fields: &[String],
    clean: &MetricBundle,
    attacked: &MetricBundle,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for f in fields {
        let (Some(c), Some(a)) = (clean.get(f), attacked.get(f)) else {
            continue;
        };
        if let Ok(d) = drop_percentage(c, a) {
            out.insert(f.clone(), d);
        }
    }
    out
}

fn evaluate_sequence(
    cfg: &ExperimentConfig,
    tracker: Option<&AnyTracker>,
    attack: Option<(AttackId, AttackConfig)>,
    seq_index: usize,
    seq: &SequenceRecord,
    fields: &[String],
    mode: OverlapMode,
) -> Result<SequenceReport> {
    let mut report = SequenceReport {
        name: seq.name.clone(),
        skipped: None,
        clean: None,
        attacked: None,
        drops: BTreeMap::new(),
        diagnostics: None,
        perturbation_checksum: None,
        clean_overlaps: Vec::new(),
        attacked_overlaps: Vec::new(),
        clean_center_errors: Vec::new(),
        attacked_center_errors: Vec::new(),
        frame_diagnostics: Vec::new(),
    };

    let clean = match run_protocol(cfg, tracker, seq, None, mode) {
        Ok(out) => out,
        Err(Error::Timeout { budget_s, frames }) => {
            report.skipped = Some(format!(
                "clean run exceeded the {budget_s:.0}s budget after {frames} frames"
            ));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.clean = Some(clean.bundle);
    report.clean_overlaps = clean.overlaps;
    report.clean_center_errors = clean.center_errors;

    let Some((id, attack_cfg)) = attack else {
        return Ok(report);
    };
    let model = tracker.ok_or_else(|| {
        Error::Config("attacks need a model tracker, not ground-truth replay".into())
    })?;
    let session = AttackSession::new(id, attack_cfg, model, seq_index as u64)?;
    let attacked = match run_protocol(cfg, tracker, seq, Some(session), mode) {
        Ok(out) => out,
        Err(Error::Timeout { budget_s, frames }) => {
            report.skipped = Some(format!(
                "attacked run exceeded the {budget_s:.0}s budget after {frames} frames"
            ));
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.drops = drops_between(fields, report.clean.as_ref().unwrap(), &attacked.bundle);
    report.attacked = Some(attacked.bundle);
    report.attacked_overlaps = attacked.overlaps;
    report.attacked_center_errors = attacked.center_errors;
    report.diagnostics = diag_summary(&attacked.diags);
    report.frame_diagnostics = attacked
        .diags
        .iter()
        .enumerate()
        .map(|(i, d)| FrameDiag {
            frame: i + 1,
            ssim: d.ssim,
            l1: d.l1,
            super_perturbed: d.super_perturbed,
        })
        .collect();
    report.perturbation_checksum = attacked.checksum;
    Ok(report)
}

/// Bundle fields that carry meaning under the configured protocol.
pub fn reported_fields(protocol: &str) -> Vec<String> {
    let fields: &[&str] = match protocol {
        "anchor" => &["EAO", "Accuracy", "Robustness"],
        _ => &["AUC", "Precision@20", "NormPrecision", "AO", "SR0.50", "SR0.75"],
    };
    fields.iter().map(|s| s.to_string()).collect()
}

/// Execute one experiment: every sequence, clean then attacked, in a
/// bounded worker pool, folded in dataset order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    cfg.validate()?;
    let tracker = if cfg.is_scripted() {
        None
    } else {
        Some(cfg.build_tracker()?)
    };
    let mode = cfg.overlap_mode()?;
    let sequences = load_dataset(&cfg.dataset)?;
    if sequences.is_empty() {
        return Err(Error::Degenerate("dataset holds no sequences".into()));
    }
    let attack = match (&cfg.attack, cfg.attack_id()?) {
        (Some(section), Some(id)) => {
            let mut attack_cfg = section.cfg.clone();
            // Pair the attack streams to the run: the session seed derives
            // from the master seed and the section's own seed knob.
            attack_cfg.seed = rng::derive(cfg.run.master_seed, &[section.cfg.seed]);
            Some((id, attack_cfg))
        }
        _ => None,
    };
    let fields = reported_fields(&cfg.protocol.id);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let seq_reports: Vec<SequenceReport> = pool.install(|| {
        sequences
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                evaluate_sequence(cfg, tracker.as_ref(), attack.clone(), i, seq, &fields, mode)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let completed: Vec<&SequenceReport> =
        seq_reports.iter().filter(|s| s.skipped.is_none()).collect();
    if completed.is_empty() {
        return Err(Error::Degenerate(
            "every sequence was skipped; nothing to aggregate".into(),
        ));
    }
    let clean_bundles: Vec<MetricBundle> = completed.iter().filter_map(|s| s.clean).collect();
    let aggregate_clean = MetricBundle::mean(&clean_bundles)?;
    let attacked_bundles: Vec<MetricBundle> = completed.iter().filter_map(|s| s.attacked).collect();
    let aggregate_attacked = if attacked_bundles.is_empty() {
        None
    } else {
        Some(MetricBundle::mean(&attacked_bundles)?)
    };
    let drops = aggregate_attacked
        .as_ref()
        .map(|a| drops_between(&fields, &aggregate_clean, a))
        .unwrap_or_default();

    let all_diags: Vec<PerturbDiagnostics> = completed
        .iter()
        .flat_map(|s| s.frame_diagnostics.iter())
        .map(|d| PerturbDiagnostics {
            ssim: d.ssim,
            l1: d.l1,
            super_perturbed: d.super_perturbed,
        })
        .collect();
    let checksum = attack.as_ref().map(|_| {
        let mut hasher = Sha256::new();
        for s in &completed {
            if let Some(c) = &s.perturbation_checksum {
                hasher.update(c.as_bytes());
            }
        }
        hex_digest(hasher)
    });

    let mut versions = BTreeMap::new();
    versions.insert("advtrack-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("advtrack-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let config_hash = {
        let mut hasher = Sha256::new();
        hasher.update(cfg.canonical_toml()?.as_bytes());
        hex_digest(hasher)
    };
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".into());

    Ok(EvaluationReport {
        provenance: Provenance {
            config_hash,
            master_seed: cfg.run.master_seed,
            versions,
            timestamp,
        },
        tracker: cfg.tracker.id.clone(),
        attack: cfg.attack.as_ref().map(|a| a.id.clone()),
        protocol: cfg.protocol.id.clone(),
        stack: match mode {
            OverlapMode::Box => "STB".to_string(),
            OverlapMode::Mask => "STS".to_string(),
        },
        metrics_reported: fields,
        sequences: seq_reports,
        aggregate: AggregateReport {
            clean: aggregate_clean,
            attacked: aggregate_attacked,
            drops,
            diagnostics: diag_summary(&all_diags),
            perturbation_checksum: checksum,
        },
    })
}

/// Run the configured experiment once per sweep value, overriding the
/// attack's budget knob. Requires an attack section.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<(f64, EvaluationReport)>> {
    if cfg.attack.is_none() {
        return Err(Error::Config(format!(
            "{} sweep needs an attack section",
            param.key()
        )));
    }
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut step = cfg.clone();
        let attack = step.attack.as_mut().unwrap();
        match param {
            SweepParam::Epsilon => attack.cfg.epsilon = v,
            SweepParam::Zeta => attack.cfg.zeta = v,
        }
        out.push((v, run_experiment(&step)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
            [dataset.synth]
            sequences = 2
            frames = 6

            [tracker]
            id = "siamcorr"
            {extra}
            "#
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn clean_run_reports_no_attack_columns() {
        let report = run_experiment(&base_config("")).unwrap();
        assert!(report.attack.is_none());
        assert!(report.aggregate.attacked.is_none());
        assert!(report.aggregate.drops.is_empty());
        assert!(report.aggregate.perturbation_checksum.is_none());
        assert_eq!(report.sequences.len(), 2);
        assert!(report.completed().count() == 2);
        assert!(report.aggregate.clean.auc > 0.0);
    }

    #[test]
    fn attacked_run_pairs_rows_and_checksums() {
        let cfg = base_config("[attack]\nid = \"rtaa\"\niters = 2\n");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.attack.as_deref(), Some("rtaa"));
        for seq in report.completed() {
            assert!(seq.clean.is_some() && seq.attacked.is_some());
            assert!(seq.perturbation_checksum.is_some());
            assert_eq!(seq.frame_diagnostics.len(), 5);
        }
        assert!(report.aggregate.attacked.is_some());
        assert!(report.aggregate.diagnostics.unwrap().frames == 10);
        assert!(!report.aggregate.drops.is_empty());
    }

    #[test]
    fn parallel_and_serial_runs_agree_exactly() {
        let serial = run_experiment(&base_config("[attack]\nid = \"iou\"\nnormal_steps = 2\n")).unwrap();
        let parallel = run_experiment(&base_config(
            "[attack]\nid = \"iou\"\nnormal_steps = 2\n\n[run]\njobs = 4\n",
        ))
        .unwrap();
        assert_eq!(
            serde_json::to_string(&serial.sequences).unwrap(),
            serde_json::to_string(&parallel.sequences).unwrap()
        );
        assert_eq!(
            serial.aggregate.perturbation_checksum,
            parallel.aggregate.perturbation_checksum
        );
    }

    #[test]
    fn sweep_expands_the_documented_grids() {
        assert_eq!(EPSILON_GRID.len(), 5);
        assert_eq!(ZETA_GRID, [8000.0, 10000.0, 12000.0]);
        let cfg = base_config("[attack]\nid = \"rtaa\"\niters = 1\n");
        let runs = run_sweep(&cfg, SweepParam::Epsilon, &[2.55, 5.1]).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs[0].1.aggregate.attacked.is_some());
        let clean_only = base_config("");
        assert!(matches!(
            run_sweep(&clean_only, SweepParam::Zeta, &ZETA_GRID),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn perfect_replay_scores_ones_under_the_anchor_protocol() {
        let text = r#"
            [dataset.synth]
            sequences = 2
            frames = 6

            [tracker]
            id = "scripted-perfect"

            [protocol]
            id = "anchor"
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let report = run_experiment(&cfg).unwrap();
        let agg = report.aggregate.clean;
        assert_eq!((agg.eao, agg.accuracy, agg.robustness), (1.0, 1.0, 1.0));

        let mut ope_cfg = cfg;
        ope_cfg.protocol = Default::default();
        let report = run_experiment(&ope_cfg).unwrap();
        // Success thresholds are strict, so overlap 1.0 misses only the
        // top threshold: 20 of 21 curve points.
        let expected = 20.0 / 21.0;
        assert!((report.aggregate.clean.auc - expected).abs() < 1e-12);
    }

    #[test]
    fn anchor_protocol_fills_the_anchor_metrics() {
        let cfg = base_config("[protocol]\nid = \"anchor\"\n");
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.metrics_reported, ["EAO", "Accuracy", "Robustness"]);
        let agg = report.aggregate.clean;
        assert!(agg.eao > 0.0 && agg.accuracy > 0.0 && agg.robustness > 0.0);
        assert_eq!(agg.auc, 0.0);
    }
}
