use std::path::Path;

use thiserror::Error;

/// Harness failure, split by the exit code the CLI reports.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        HarnessError::Data(msg.into())
    }

    pub(crate) fn io(path: &Path, err: std::io::Error) -> Self {
        HarnessError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<effortsim_core::Error> for HarnessError {
    fn from(e: effortsim_core::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
