//! Experiment configuration: TOML schema, defaults, and up-front checks.
//!
//! A config names a dataset (a directory of saved sequences or a synthesis
//! spec), one tracker, at most one attack, one protocol with its evaluation
//! target, and the run controls (master seed, parallelism, per-sequence
//! budget). `validate` rejects impossible combinations — unknown ids,
//! inapplicable attack/tracker pairings, mask evaluation of a box-only
//! tracker — before any sequence is touched.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use advtrack_core::attacks::{ensure_applicable, AttackConfig, AttackId};
use advtrack_core::error::{Error, Result};
use advtrack_core::eval::OverlapMode;
use advtrack_core::synth::SuiteParams;
use advtrack_core::trackers::{AnyTracker, Tracker};

/// Tracker id for the ground-truth replay driver: it emits each frame's
/// annotation verbatim (boxes and masks), trivially perfect under every
/// protocol. Useful as a calibration ceiling; it cannot be attacked.
pub const SCRIPTED_TRACKER_ID: &str = "scripted-perfect";

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub tracker: TrackerConfig,
    /// Absent means a clean-only run.
    #[serde(default)]
    pub attack: Option<AttackSection>,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Exactly one of `path` (a saved dataset directory) or `synth` (generate
/// on the fly) must be given.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub sequences: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub anchor_spacing: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let p = SuiteParams::default();
        SynthConfig {
            seed: p.seed,
            sequences: p.sequences,
            frames: p.frames,
            width: p.width,
            height: p.height,
            anchor_spacing: p.anchor_spacing,
        }
    }
}

impl From<SynthConfig> for SuiteParams {
    fn from(c: SynthConfig) -> SuiteParams {
        SuiteParams {
            seed: c.seed,
            sequences: c.sequences,
            frames: c.frames,
            width: c.width,
            height: c.height,
            anchor_spacing: c.anchor_spacing,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub id: String,
    /// Overrides the tracker's frozen stock seed when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub id: String,
    #[serde(flatten)]
    pub cfg: AttackConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// `ope` (one-pass) or `anchor` (re-initializing).
    pub id: String,
    /// `bbox` or `mask`.
    pub target: String,
    /// Overlap below which an anchor run counts as failed.
    pub failure_threshold: f64,
    /// Frame horizon for the expected-overlap average; defaults to each
    /// sequence's length.
    pub eao_horizon: Option<usize>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            id: "ope".into(),
            target: "bbox".into(),
            failure_threshold: 0.1,
            eao_horizon: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    /// Worker pool degree for per-sequence parallelism.
    pub jobs: usize,
    /// Per-sequence wall-clock budget; exceeding it skips the sequence.
    pub timeout_sec: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            master_seed: 0,
            jobs: 1,
            timeout_sec: 300,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical serialization — the basis of the provenance hash, so two
    /// differently-formatted files with equal content hash identically.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize: {e}")))
    }

    /// True when the config names the ground-truth replay driver instead
    /// of a model tracker.
    pub fn is_scripted(&self) -> bool {
        self.tracker.id == SCRIPTED_TRACKER_ID
    }

    /// Construct the configured model tracker (stock seed unless
    /// overridden). Errors for the scripted id — replay needs no model.
    pub fn build_tracker(&self) -> Result<AnyTracker> {
        match self.tracker.weight_seed {
            Some(seed) => AnyTracker::from_id(&self.tracker.id, seed),
            None => AnyTracker::from_id_default(&self.tracker.id),
        }
    }

    /// The attack id, when an attack section is present.
    pub fn attack_id(&self) -> Result<Option<AttackId>> {
        self.attack.as_ref().map(|a| a.id.parse()).transpose()
    }

    pub fn overlap_mode(&self) -> Result<OverlapMode> {
        match self.protocol.target.as_str() {
            "bbox" => Ok(OverlapMode::Box),
            "mask" => Ok(OverlapMode::Mask),
            other => Err(Error::Config(format!(
                "unknown eval target {other:?} (expected bbox or mask)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.path, &self.dataset.synth) {
            (None, None) => {
                return Err(Error::Config(
                    "dataset needs either a path or a synth spec".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "dataset path and synth spec are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        let mode = self.overlap_mode()?;
        if self.is_scripted() {
            // Replay emits ground truth directly (boxes and masks); the
            // only impossible combination is attacking it.
            if self.attack.is_some() {
                return Err(Error::Config(format!(
                    "tracker '{SCRIPTED_TRACKER_ID}' replays annotations and cannot be attacked; \
                     drop the [attack] section or pick a model tracker"
                )));
            }
        } else {
            let tracker = self.build_tracker()?;
            if mode == OverlapMode::Mask && !tracker.capabilities().exposes_mask {
                return Err(Error::Config(format!(
                    "tracker '{}' emits no mask; mask evaluation is impossible",
                    self.tracker.id
                )));
            }
            if let Some(attack) = &self.attack {
                let id: AttackId = attack.id.parse()?;
                attack.cfg.validate()?;
                ensure_applicable(id, &self.tracker.id, &tracker.capabilities())?;
            }
        }
        if !matches!(self.protocol.id.as_str(), "ope" | "anchor") {
            return Err(Error::Config(format!(
                "unknown protocol {:?} (expected ope or anchor)",
                self.protocol.id
            )));
        }
        if !(0.0..1.0).contains(&self.protocol.failure_threshold) {
            return Err(Error::Config(format!(
                "failure threshold must be in [0,1), got {}",
                self.protocol.failure_threshold
            )));
        }
        if self.run.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [dataset.synth]
        sequences = 2
        frames = 8

        [tracker]
        id = "siamcorr"
    "#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert!(cfg.attack.is_none());
        assert_eq!(cfg.protocol.id, "ope");
        assert_eq!(cfg.protocol.target, "bbox");
        assert_eq!(cfg.run.timeout_sec, 300);
        assert_eq!(cfg.run.jobs, 1);
        let synth = cfg.dataset.synth.unwrap();
        assert_eq!((synth.sequences, synth.frames), (2, 8));
        assert_eq!(synth.width, 64);
    }

    #[test]
    fn attack_section_flattens_attack_fields() {
        let text = format!(
            "{MINIMAL}\n[attack]\nid = \"rtaa\"\nepsilon = 5.1\niters = 3\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let attack = cfg.attack.unwrap();
        assert_eq!(attack.id, "rtaa");
        assert_eq!(attack.cfg.epsilon, 5.1);
        assert_eq!(attack.cfg.iters, 3);
        // Untouched fields keep their defaults.
        assert_eq!(attack.cfg.history_window, 30);
    }

    #[test]
    fn inapplicable_pairing_is_rejected_up_front() {
        let text = r#"
            [dataset.synth]

            [tracker]
            id = "tinyformer"

            [attack]
            id = "spark"
        "#;
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        match err {
            Error::Applicability { attack, tracker, .. } => {
                assert_eq!((attack.as_str(), tracker.as_str()), ("spark", "tinyformer"));
            }
            other => panic!("expected applicability rejection, got {other:?}"),
        }
    }

    #[test]
    fn impossible_dataset_and_target_combinations_are_config_errors() {
        let both = r#"
            [dataset]
            path = "somewhere"
            [dataset.synth]

            [tracker]
            id = "siamcorr"
        "#;
        assert!(matches!(
            ExperimentConfig::from_toml_str(both),
            Err(Error::Config(_))
        ));

        let neither = "[dataset]\n[tracker]\nid = \"siamcorr\"\n";
        assert!(matches!(
            ExperimentConfig::from_toml_str(neither),
            Err(Error::Config(_))
        ));

        let mask_of_boxes_only = format!("{MINIMAL}\n[protocol]\ntarget = \"mask\"\n");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&mask_of_boxes_only),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scripted_replay_accepts_masks_but_never_attacks() {
        let masked = r#"
            [dataset.synth]

            [tracker]
            id = "scripted-perfect"

            [protocol]
            target = "mask"
        "#;
        let cfg = ExperimentConfig::from_toml_str(masked).unwrap();
        assert!(cfg.is_scripted());
        assert_eq!(cfg.overlap_mode().unwrap(), OverlapMode::Mask);

        let attacked = r#"
            [dataset.synth]

            [tracker]
            id = "scripted-perfect"

            [attack]
            id = "rtaa"
        "#;
        assert!(matches!(
            ExperimentConfig::from_toml_str(attacked),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\ntypo_section = 3\n");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&text),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn canonical_toml_is_format_insensitive() {
        let spaced = "[dataset]\n\n[dataset.synth]\nseed    = 0\n\n[tracker]\nid = \"siamcorr\"\n";
        let tight = "[dataset.synth]\n[tracker]\nid=\"siamcorr\"\n";
        let a = ExperimentConfig::from_toml_str(spaced).unwrap();
        let b = ExperimentConfig::from_toml_str(tight).unwrap();
        assert_eq!(a.canonical_toml().unwrap(), b.canonical_toml().unwrap());
    }
}
