//! Report structures and file emission.
//!
//! A run produces one [`EvaluationReport`]; `emit_report` renders it as
//! `summary.csv` (one row per metric with Clean/Attack/Drop columns),
//! `curves/*.csv` (threshold,value pairs for success/precision plots),
//! `diagnostics.csv` (per-frame perturbation diagnostics), and
//! `report.json` (the full structured dump). All text output is UTF-8 with
//! `\n` line endings; every drop printed in a CSV is recomputable from the
//! clean/attacked columns of the same file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use advtrack_core::error::{Error, Result};
use advtrack_core::eval::{
    drop_percentage, precision_curve, success_curve, MetricBundle,
};

use crate::reference::REFERENCE_ROWS;

/// Provenance block: everything needed to re-run the experiment, plus the
/// emission timestamp. The timestamp is the only non-reproducible field and
/// is isolated here so byte-for-byte comparisons can mask exactly one line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub versions: BTreeMap<String, String>,
    pub timestamp: String,
}

/// Mean perturbation visibility over the attacked frames of one scope
/// (a sequence or the whole run).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct DiagSummary {
    pub mean_ssim: f64,
    pub mean_l1: f64,
    /// Frames whose structural similarity fell below the visibility knee.
    pub super_perturbed: usize,
    pub frames: usize,
}

/// One attacked frame's perturbation diagnostics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FrameDiag {
    pub frame: usize,
    pub ssim: f64,
    pub l1: f64,
    pub super_perturbed: bool,
}

/// Everything one sequence contributed to the run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    /// Reason the sequence was abandoned (its metrics are excluded from
    /// aggregates), or absent when it completed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<MetricBundle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacked: Option<MetricBundle>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drops: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagSummary>,
    /// Hex digest over the attacked run's perturbation stream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_checksum: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clean_overlaps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacked_overlaps: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clean_center_errors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacked_center_errors: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frame_diagnostics: Vec<FrameDiag>,
}

/// Aggregates over the completed sequences.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateReport {
    pub clean: MetricBundle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacked: Option<MetricBundle>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub drops: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagSummary>,
    /// Digest folding the per-sequence perturbation digests in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_checksum: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub provenance: Provenance,
    pub tracker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<String>,
    pub protocol: String,
    /// Evaluation stack label: STB for box targets, STS for mask targets.
    pub stack: String,
    /// Bundle fields that carry meaning under this protocol, in row order.
    pub metrics_reported: Vec<String>,
    pub sequences: Vec<SequenceReport>,
    pub aggregate: AggregateReport,
}

impl EvaluationReport {
    /// Sequences that completed (and therefore feed the aggregates).
    pub fn completed(&self) -> impl Iterator<Item = &SequenceReport> {
        self.sequences.iter().filter(|s| s.skipped.is_none())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("report parse {}: {e}", path.display())))
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(content.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// `label,attack,metric,clean,attacked,drop` rows for one report. Scores are
/// printed to three decimals and drops to two, with the drop recomputed from
/// the rounded scores so the file stays internally consistent.
fn summary_rows(report: &EvaluationReport) -> String {
    let mut out = String::from("label,attack,metric,clean,attacked,drop\n");
    let attack = report.attack.as_deref().unwrap_or("none");
    for metric in &report.metrics_reported {
        let clean = report.aggregate.clean.get(metric).unwrap_or(0.0);
        let (attacked, drop) = match &report.aggregate.attacked {
            Some(a) => {
                let av = a.get(metric).unwrap_or(0.0);
                let rounded_clean = (clean * 1000.0).round() / 1000.0;
                let rounded_attacked = (av * 1000.0).round() / 1000.0;
                let d = drop_percentage(rounded_clean, rounded_attacked)
                    .map(|d| format!("{d:.2}"))
                    .unwrap_or_default();
                (format!("{av:.3}"), d)
            }
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "{},{},{},{:.3},{},{}\n",
            report.stack, attack, metric, clean, attacked, drop
        ));
    }
    out
}

fn curve_csv(header: &str, thresholds: impl Iterator<Item = f64>, values: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (t, v) in thresholds.zip(values) {
        out.push_str(&format!("{t:.2},{v:.6}\n"));
    }
    out
}

fn pooled<'a>(
    report: &'a EvaluationReport,
    field: impl Fn(&'a SequenceReport) -> &'a [f64],
) -> Vec<f64> {
    report.completed().flat_map(field).copied().collect()
}

/// Render one report into `out_dir`: summary, curves, diagnostics, JSON.
/// Returns the files written.
pub fn emit_report(report: &EvaluationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut written = Vec::new();

    let summary = out_dir.join("summary.csv");
    write_file(&summary, &summary_rows(report))?;
    written.push(summary);

    // Success/precision curves only exist under the one-pass protocol; the
    // re-initializing protocol summarizes through its own metrics.
    if report.protocol == "ope" {
        let curves_dir = out_dir.join("curves");
        fs::create_dir_all(&curves_dir).map_err(|e| Error::io(curves_dir.display().to_string(), e))?;
        let arms: [(&str, fn(&SequenceReport) -> &[f64], fn(&SequenceReport) -> &[f64]); 2] = [
            ("clean", |s| &s.clean_overlaps, |s| &s.clean_center_errors),
            ("attacked", |s| &s.attacked_overlaps, |s| &s.attacked_center_errors),
        ];
        for (arm, overlaps_of, errors_of) in arms {
            let overlaps = pooled(report, overlaps_of);
            if overlaps.is_empty() {
                continue;
            }
            let success = curve_csv(
                "threshold,value",
                (0..).map(|i| i as f64 * 0.05),
                &success_curve(&overlaps)?,
            );
            let path = curves_dir.join(format!("success_{arm}.csv"));
            write_file(&path, &success)?;
            written.push(path);

            let errors = pooled(report, errors_of);
            let precision = curve_csv(
                "threshold_px,value",
                (0..).map(|i| i as f64),
                &precision_curve(&errors)?,
            );
            let path = curves_dir.join(format!("precision_{arm}.csv"));
            write_file(&path, &precision)?;
            written.push(path);
        }
    }

    let mut diag = String::from("sequence,frame,ssim,l1,super_perturbed\n");
    for seq in report.completed() {
        for d in &seq.frame_diagnostics {
            diag.push_str(&format!(
                "{},{},{:.6},{:.4},{}\n",
                seq.name, d.frame, d.ssim, d.l1, d.super_perturbed as u8
            ));
        }
    }
    let diag_path = out_dir.join("diagnostics.csv");
    write_file(&diag_path, &diag)?;
    written.push(diag_path);

    let json_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialize: {e}")))?;
    write_file(&json_path, &(json + "\n"))?;
    written.push(json_path);

    Ok(written)
}

/// Emit the published reference tables, one directory per source tracker,
/// with each drop recomputed from its printed (clean, attacked) pair.
pub fn emit_reference_tables(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let trackers: Vec<&str> = {
        let mut seen = Vec::new();
        for r in REFERENCE_ROWS.iter() {
            if !seen.contains(&r.tracker) {
                seen.push(r.tracker);
            }
        }
        seen
    };
    for tracker in trackers {
        let dir = out_dir.join(tracker);
        fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        let mut out = String::from("label,attack,metric,clean,attacked,drop\n");
        for r in REFERENCE_ROWS.iter().filter(|r| r.tracker == tracker) {
            let drop = drop_percentage(r.clean, r.attacked)?;
            out.push_str(&format!(
                "{},{},{},{:.3},{:.3},{:.2}\n",
                r.stack, r.attack, r.metric, r.clean, r.attacked, drop
            ));
        }
        let path = dir.join("summary.csv");
        write_file(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_report() -> EvaluationReport {
        EvaluationReport {
            provenance: Provenance {
                config_hash: "0".repeat(64),
                master_seed: 0,
                versions: BTreeMap::new(),
                timestamp: "0".into(),
            },
            tracker: "siamcorr".into(),
            attack: None,
            protocol: "ope".into(),
            stack: "STB".into(),
            metrics_reported: vec![],
            sequences: vec![],
            aggregate: AggregateReport {
                clean: MetricBundle::default(),
                attacked: None,
                drops: BTreeMap::new(),
                diagnostics: None,
                perturbation_checksum: None,
            },
        }
    }

    #[test]
    fn empty_report_emits_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&empty_report(), dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary, "label,attack,metric,clean,attacked,drop\n");
        let diag = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(diag, "sequence,frame,ssim,l1,super_perturbed\n");
        assert!(files.iter().any(|f| f.ends_with("report.json")));
        // No overlaps -> no curve files, but the run still succeeds.
        assert!(!dir.path().join("curves/success_clean.csv").exists());
    }

    #[test]
    fn reference_tables_contain_the_published_box_iou_row() {
        let dir = tempfile::tempdir().unwrap();
        emit_reference_tables(dir.path()).unwrap();
        let t = fs::read_to_string(dir.path().join("transt-seg/summary.csv")).unwrap();
        assert!(
            t.contains("STB,IoU,EAO,0.299,0.231,22.74\n"),
            "missing published row in:\n{t}"
        );
        let m = fs::read_to_string(dir.path().join("mixformerm/summary.csv")).unwrap();
        assert!(m.lines().count() == 13 && t.lines().count() == 25);
    }

    #[test]
    fn summary_drops_recompute_from_the_printed_columns() {
        let dir = tempfile::tempdir().unwrap();
        emit_reference_tables(dir.path()).unwrap();
        for file in ["transt-seg/summary.csv", "mixformerm/summary.csv"] {
            let text = fs::read_to_string(dir.path().join(file)).unwrap();
            for row in text.lines().skip(1) {
                let cols: Vec<&str> = row.split(',').collect();
                let clean: f64 = cols[3].parse().unwrap();
                let attacked: f64 = cols[4].parse().unwrap();
                let drop: f64 = cols[5].parse().unwrap();
                let recomputed = drop_percentage(clean, attacked).unwrap();
                assert!(
                    (recomputed - drop).abs() < 0.005 + 1e-9,
                    "{file}: {row} vs {recomputed}"
                );
            }
        }
    }
}
