use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("invalid level index {index} for feature `{feature}`")]
    InvalidLevel { feature: String, index: f64 },

    #[error("group `{0}` has no members")]
    EmptyGroup(String),

    #[error("population is empty")]
    EmptyPopulation,

    #[error("feature list mismatch: model was fitted on a different schema")]
    FeatureMismatch,

    #[error("negative benefit {benefit} cannot be raised to non-integer power {alpha}")]
    NegativeBenefit { benefit: f64, alpha: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}
