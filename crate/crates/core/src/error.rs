use alloc::string::String;

use crate::otfg::OtfgSpec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{context}: expected length {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("incompatible grids {src} -> {dst}: {reason}")]
    IncompatibleGrids {
        src: OtfgSpec,
        dst: OtfgSpec,
        reason: &'static str,
    },
    #[error("invalid grid `{0}`, expected SYMxSUB")]
    InvalidGrid(String),
    #[error("degenerate signal energy {0:e} (dead transmitter branch?)")]
    DegenerateEnergy(f64),
    #[error("negative noise standard deviation {0}")]
    NegativeSigma(f64),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("backward called without a matching forward cache")]
    MissingCache,
    #[error("forward cache is stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
