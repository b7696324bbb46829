use thiserror::Error;

use crate::config::DATASET_IDS;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid value for `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("unknown dataset `{0}`; valid ids: {ids}", ids = DATASET_IDS.join(", "))]
    UnknownDataset(String),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
    #[error(transparent)]
    Core(dean_core::Error),
}

impl CliError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Configuration problems from the library keep their key.
    pub fn from_core(e: dean_core::Error) -> Self {
        match e {
            dean_core::Error::InvalidConfig { key, reason } => CliError::Config { key, reason },
            other => CliError::Core(other),
        }
    }

    /// 2 for usage and configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } | CliError::UnknownDataset(_) => 2,
            CliError::Verification(_) | CliError::Core(_) => 1,
        }
    }
}

impl From<dean_core::Error> for CliError {
    fn from(e: dean_core::Error) -> Self {
        CliError::Core(e)
    }
}
