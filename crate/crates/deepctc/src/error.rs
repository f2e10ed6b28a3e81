use deepctc_core::Error as CoreError;

use crate::model_file::ModelFileError;

/// Command failures, each mapped to a distinct process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Diverged { .. }
            | CoreError::NonFinite(_)
            | CoreError::DegenerateEnergy(_) => CliError::Divergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        CliError::Io(e.to_string())
    }
}
