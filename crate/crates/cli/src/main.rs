//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration/usage error (bad flags, bad
//! config file, inapplicable attack/tracker pairing), 2 runtime failure
//! (IO, numeric, or a failing gradient check).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use advtrack_core::attacks::register_attack_losses;
use advtrack_core::dataset;
use advtrack_core::error::Error;
use advtrack_core::grad::OpRegistry;
use advtrack_core::synth::{self, SuiteParams};

use advtrack_cli::config::ExperimentConfig;
use advtrack_cli::report::{emit_reference_tables, emit_report, EvaluationReport};
use advtrack_cli::runner::{run_experiment, run_sweep, SweepParam};

#[derive(Parser)]
#[command(
    name = "advtrack",
    about = "Adversarial-robustness harness for toy visual trackers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunOverrides {
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker pool degree override.
    #[arg(long)]
    jobs: Option<usize>,
    /// Per-sequence wall-clock budget override, in seconds.
    #[arg(long)]
    timeout_sec: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(seed) = self.seed {
            cfg.run.master_seed = seed;
        }
        if let Some(jobs) = self.jobs {
            cfg.run.jobs = jobs;
        }
        if let Some(t) = self.timeout_sec {
            cfg.run.timeout_sec = t;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence suite into a dataset directory.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        sequences: usize,
        #[arg(long, default_value_t = 40)]
        frames: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 50)]
        anchor_spacing: usize,
    },
    /// Execute an experiment config and emit its report files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
    /// Finite-difference check of every registered differentiable op.
    Gradcheck {
        /// Probe points per op.
        #[arg(long, default_value_t = 5)]
        points: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Relative-error tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Re-emit report files from a saved report.json, or emit the
    /// published reference tables.
    Report {
        /// Saved report to re-aggregate.
        #[arg(long, conflicts_with = "reference")]
        input: Option<PathBuf>,
        /// Emit the published robustness tables instead.
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run an attack-budget sweep (one experiment per grid value).
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Which knob to sweep: epsilon or zeta.
        #[arg(long)]
        param: String,
        /// Grid override (defaults to the documented grid for the knob).
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        overrides: RunOverrides,
    },
}

/// 1 for configuration errors, 2 for runtime failures.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Applicability { .. } | Error::UnknownOp(_) => 1,
        _ => 2,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth {
            out_dir,
            seed,
            sequences,
            frames,
            width,
            height,
            anchor_spacing,
        } => {
            let suite = synth::standard_suite(&SuiteParams {
                seed,
                sequences,
                frames,
                width,
                height,
                anchor_spacing,
            })?;
            for seq in &suite {
                let dir = dataset::save_sequence(&out_dir, seq)?;
                println!("wrote {}", dir.display());
            }
            println!("{} sequences in {}", suite.len(), out_dir.display());
            Ok(())
        }
        Command::Run {
            config,
            out_dir,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let report = run_experiment(&cfg)?;
            let files = emit_report(&report, &out_dir)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            for seq in &report.sequences {
                if let Some(reason) = &seq.skipped {
                    println!("skipped {}: {}", seq.name, reason);
                }
            }
            Ok(())
        }
        Command::Gradcheck {
            points,
            step,
            tol,
            seed,
        } => {
            let mut registry = OpRegistry::standard();
            register_attack_losses(&mut registry)?;
            let reports = registry.check_all(points, step, tol, seed)?;
            // One line per op: fold the per-point reports together.
            let mut worst_fail = None;
            for name in registry.names() {
                let per_op: Vec<_> = reports.iter().filter(|r| r.op == name).collect();
                let max_rel = per_op.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
                let pass = per_op.iter().all(|r| r.pass);
                let coords: usize = per_op.iter().map(|r| r.coords_checked).sum();
                println!(
                    "{} {:24} max_rel_err {:.3e} (tol {:.0e}, {} points, {} coords)",
                    if pass { "PASS" } else { "FAIL" },
                    name,
                    max_rel,
                    tol,
                    per_op.len(),
                    coords
                );
                if !pass && worst_fail.is_none() {
                    worst_fail = Some(name.clone());
                }
            }
            match worst_fail {
                None => {
                    println!("{} checks passed", reports.len());
                    Ok(())
                }
                Some(op) => Err(Error::Degenerate(format!(
                    "gradient check failed (first failing op: {op})"
                ))),
            }
        }
        Command::Report {
            input,
            reference,
            out_dir,
        } => {
            let files = if reference {
                emit_reference_tables(&out_dir)?
            } else {
                let path = input.ok_or_else(|| {
                    Error::Config("report needs --input <report.json> or --reference".into())
                })?;
                let report = EvaluationReport::load(&path)?;
                emit_report(&report, &out_dir)?
            };
            for f in &files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out_dir,
            overrides,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            overrides.apply(&mut cfg);
            let param: SweepParam = param.parse()?;
            let grid: Vec<f64> = if values.is_empty() {
                param.grid().to_vec()
            } else {
                values
            };
            let runs = run_sweep(&cfg, param, &grid)?;
            let mut index = String::from("value,mean_ssim,mean_l1,super_perturbed,frames\n");
            for (value, report) in &runs {
                let dir = out_dir.join(format!("{}_{}", param.key(), value));
                emit_report(report, &dir)?;
                println!("wrote {}", dir.display());
                if let Some(d) = &report.aggregate.diagnostics {
                    index.push_str(&format!(
                        "{},{:.6},{:.4},{},{}\n",
                        value, d.mean_ssim, d.mean_l1, d.super_perturbed, d.frames
                    ));
                }
            }
            let index_path = out_dir.join("sweep.csv");
            std::fs::write(&index_path, index)
                .map_err(|e| Error::io(index_path.display().to_string(), e))?;
            println!("wrote {}", index_path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are successful exits; everything else is usage.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
