//! Experiment configuration: a preset overlaid by an optional TOML file and
//! then by command-line flags.
//!
//! ```toml
//! preset = "joint-alpha"        # optional base, defaults to joint-alpha
//!
//! [model]
//! intech_alphabet = 64
//! ctc_alphabet = 4
//! tx_grid = "4x4"               # SYMxSUB or a technology preset name
//! ctc_rx_grids = ["1x16"]
//! intech_enabled = true
//! alpha = 0.9
//! ctc_weights = [1.0]           # broadcast mode only
//! hidden_width = 64             # omit for the automatic width
//! hidden_depth = 1
//!
//! [train]
//! total_samples = 1000000
//! batch_size = 256
//! optimizer = "adam"            # or "sgd"
//! lr = 1e-3
//! train_snr_db = 3.0
//! seed = 7
//! checkpoint_every = 500
//! log_every = 100
//!
//! [eval]
//! test_samples = 100000
//! snr_start = -2.0
//! snr_stop = 8.0
//! snr_step = 1.0
//! ```
//!
//! Every key is optional and unknown keys are errors.

use std::path::Path;

use deepctc_core::otfg::OtfgSpec;
use deepctc_core::training::{OptimizerKind, TrainPlan};
use deepctc_core::ModelConfig;
use serde::Deserialize;

use crate::presets::Preset;
use crate::CliError;

/// Per-point test-set size used by `--full-scale`.
pub const FULL_SCALE_TEST_SAMPLES: u64 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPlan {
    pub test_samples: u64,
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
}

impl Default for EvalPlan {
    fn default() -> Self {
        Self {
            test_samples: 100_000,
            snr_start: -2.0,
            snr_stop: 8.0,
            snr_step: 1.0,
        }
    }
}

/// Everything needed to train and evaluate one model.
///
/// `seed` stays `None` until a flag, the config file or the environment
/// provides one; see [`crate::runner::resolve_seed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ModelConfig,
    pub train: TrainPlan,
    pub eval: EvalPlan,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub intech_alphabet: Option<usize>,
    pub ctc_alphabet: Option<usize>,
    pub tx_grid: Option<String>,
    pub ctc_rx_grids: Option<Vec<String>>,
    pub intech_enabled: Option<bool>,
    pub alpha: Option<f64>,
    pub ctc_weights: Option<Vec<f64>>,
    pub hidden_width: Option<usize>,
    pub hidden_depth: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub total_samples: Option<usize>,
    pub batch_size: Option<usize>,
    pub optimizer: Option<String>,
    pub lr: Option<f64>,
    pub train_snr_db: Option<f64>,
    pub seed: Option<u64>,
    pub checkpoint_every: Option<usize>,
    pub log_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub test_samples: Option<u64>,
    pub snr_start: Option<f64>,
    pub snr_stop: Option<f64>,
    pub snr_step: Option<f64>,
}

pub fn parse_grid(field: &str, value: &str) -> Result<OtfgSpec, CliError> {
    OtfgSpec::parse(value).map_err(|e| CliError::Config(format!("{field}: {e}")))
}

pub fn parse_optimizer(value: &str) -> Result<OptimizerKind, CliError> {
    OptimizerKind::from_name(value).ok_or_else(|| {
        CliError::Config(format!(
            "optimizer: unknown optimizer `{value}` (expected adam or sgd)"
        ))
    })
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&self, exp: &mut Experiment) -> Result<(), CliError> {
        let m = &self.model;
        let cfg = &mut exp.model;
        set(&mut cfg.intech_alphabet, m.intech_alphabet);
        set(&mut cfg.ctc_alphabet, m.ctc_alphabet);
        if let Some(g) = &m.tx_grid {
            cfg.tx_grid = parse_grid("model.tx_grid", g)?;
        }
        if let Some(grids) = &m.ctc_rx_grids {
            cfg.ctc_rx_grids = grids
                .iter()
                .map(|g| parse_grid("model.ctc_rx_grids", g))
                .collect::<Result<_, _>>()?;
        }
        set(&mut cfg.intech_enabled, m.intech_enabled);
        set(&mut cfg.alpha, m.alpha);
        if m.ctc_weights.is_some() {
            cfg.ctc_weights.clone_from(&m.ctc_weights);
        }
        if m.hidden_width.is_some() {
            cfg.hidden_width = m.hidden_width;
        }
        set(&mut cfg.hidden_depth, m.hidden_depth);

        let t = &self.train;
        let plan = &mut exp.train;
        set(&mut plan.total_samples, t.total_samples);
        set(&mut plan.batch_size, t.batch_size);
        if let Some(o) = &t.optimizer {
            plan.optimizer = parse_optimizer(o)?;
        }
        set(&mut plan.lr, t.lr);
        set(&mut plan.train_snr_db, t.train_snr_db);
        set(&mut plan.checkpoint_every, t.checkpoint_every);
        set(&mut plan.log_every, t.log_every);
        if t.seed.is_some() {
            exp.seed = t.seed;
        }

        let e = &self.eval;
        set(&mut exp.eval.test_samples, e.test_samples);
        set(&mut exp.eval.snr_start, e.snr_start);
        set(&mut exp.eval.snr_stop, e.snr_stop);
        set(&mut exp.eval.snr_step, e.snr_step);
        Ok(())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Resolves the base experiment: `--preset`, else the file's `preset`, else
/// joint-alpha; then the file's overrides.
pub fn load_experiment(preset: Option<&str>, file: Option<&Path>) -> Result<Experiment, CliError> {
    let file = file.map(ConfigFile::load).transpose()?;
    let name = preset
        .or_else(|| file.as_ref().and_then(|f| f.preset.as_deref()))
        .unwrap_or(Preset::JointAlpha.name());
    let mut exp = Preset::from_name(name)
        .ok_or_else(|| {
            CliError::Config(format!(
                "preset: unknown preset `{name}` (expected one of {})",
                Preset::ALL.map(Preset::name).join(", ")
            ))
        })?
        .experiment();
    if let Some(f) = &file {
        f.apply(&mut exp)?;
    }
    Ok(exp)
}

impl Experiment {
    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        let e = &self.eval;
        if e.test_samples == 0 {
            return Err(CliError::Config("test_samples: must be positive".into()));
        }
        deepctc_core::eval::snr_grid(e.snr_start, e.snr_stop, e.snr_step)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_keeps_preset() {
        let mut exp = Preset::JointAlpha.experiment();
        let before = exp.clone();
        ConfigFile::parse("").unwrap().apply(&mut exp).unwrap();
        assert_eq!(exp, before);
    }

    #[test]
    fn file_overrides_fields() {
        let text = r#"
            [model]
            alpha = 1.0
            ctc_rx_grids = ["4x4", "802.11n/ac"]
            hidden_width = 32
            [train]
            optimizer = "sgd"
            seed = 11
            [eval]
            snr_step = 0.5
        "#;
        let mut exp = Preset::JointAlpha.experiment();
        ConfigFile::parse(text).unwrap().apply(&mut exp).unwrap();
        assert_eq!(exp.model.alpha, 1.0);
        assert_eq!(exp.model.ctc_rx_grids.len(), 2);
        assert_eq!(exp.model.ctc_rx_grids[1].channel_uses(), 64);
        assert_eq!(exp.model.hidden_width, Some(32));
        assert_eq!(exp.train.optimizer, OptimizerKind::Sgd);
        assert_eq!(exp.seed, Some(11));
        assert_eq!(exp.eval.snr_step, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            ConfigFile::parse("[model]\nalfa = 0.5\n"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ConfigFile::parse("[extra]\n"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn bad_values_name_the_field() {
        let mut exp = Preset::JointAlpha.experiment();
        let err = ConfigFile::parse("[model]\ntx_grid = \"4by4\"\n")
            .unwrap()
            .apply(&mut exp)
            .unwrap_err();
        assert!(err.to_string().contains("model.tx_grid"), "{err}");
        exp.model.alpha = 1.5;
        let err = exp.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("alpha"), "{err}");
    }
}
