use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BallocError {
    #[error("invalid load vector: {0}")]
    InvalidLoads(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("step distribution needs integral M = n(a-1)/(ab-1), got {m} for a={a}, b={b}, n={n}")]
    NonIntegralStep { a: f64, b: f64, n: usize, m: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid process configuration: {0}")]
    InvalidProcess(String),

    #[error("enumeration needs {needed} sequences, cap is {cap}")]
    EnumerationCap { needed: f64, cap: u64 },

    #[error("layered schedule too short: j_max = {j_max} < 1")]
    ScheduleTooShort { j_max: i64 },

    #[error("trace lacks per-step data: {0}")]
    MissingStepData(String),

    #[error("invalid spec string `{spec}`: {reason}")]
    InvalidSpec { spec: String, reason: String },

    #[error("grid has {cells} cells, more than {limit} needs --force")]
    GridTooLarge { cells: usize, limit: usize },

    #[error("{0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BallocError {
    /// Errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, BallocError::Io(_) | BallocError::Csv(_))
    }
}

pub type Result<T, E = BallocError> = std::result::Result<T, E>;
