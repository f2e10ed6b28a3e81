//! Named experiment presets.

use deepctc_core::otfg::OtfgSpec;
use deepctc_core::training::TrainPlan;
use deepctc_core::ModelConfig;

use crate::config::{EvalPlan, Experiment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// In-technology 64-ary plus CTC 4-ary on a 4x4 grid, CTC receiver 1x16.
    JointAlpha,
    /// CTC-only broadcast to a 4x4 and a 1x16 receiver.
    BroadcastHetero,
    /// CTC-only broadcast to two 4x4 receivers.
    BroadcastHomoA,
    /// CTC-only broadcast to two 1x16 receivers.
    BroadcastHomoB,
}

fn grid(symbols: usize, subcarriers: usize) -> OtfgSpec {
    OtfgSpec::new(symbols, subcarriers).expect("preset grids are non-empty")
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::JointAlpha,
        Preset::BroadcastHetero,
        Preset::BroadcastHomoA,
        Preset::BroadcastHomoB,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::JointAlpha => "joint-alpha",
            Preset::BroadcastHetero => "broadcast-hetero",
            Preset::BroadcastHomoA => "broadcast-homo-a",
            Preset::BroadcastHomoB => "broadcast-homo-b",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(name))
    }

    pub fn model(self) -> ModelConfig {
        let a = grid(4, 4);
        let b = grid(1, 16);
        match self {
            Preset::JointAlpha => ModelConfig::joint(64, 4, a, vec![b], 0.9),
            Preset::BroadcastHetero => broadcast(vec![a, b]),
            Preset::BroadcastHomoA => broadcast(vec![a, a]),
            Preset::BroadcastHomoB => broadcast(vec![b, b]),
        }
    }

    pub fn train(self) -> TrainPlan {
        TrainPlan::default()
    }

    pub fn eval(self) -> EvalPlan {
        match self {
            Preset::JointAlpha => EvalPlan::default(),
            // The CTC-only 4-ary code crosses 1e-2 well below 0 dB.
            _ => EvalPlan {
                snr_start: -10.0,
                snr_stop: 6.0,
                ..EvalPlan::default()
            },
        }
    }

    pub fn experiment(self) -> Experiment {
        Experiment {
            model: self.model(),
            train: self.train(),
            eval: self.eval(),
            seed: None,
        }
    }
}

fn broadcast(grids: Vec<OtfgSpec>) -> ModelConfig {
    let weights = vec![1.0; grids.len()];
    ModelConfig {
        ctc_weights: Some(weights),
        ..ModelConfig::broadcast(4, grid(4, 4), grids)
    }
}
