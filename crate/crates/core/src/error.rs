//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; `field` names the offending entry.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation called on inputs that violate its usage contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Comparison generation could not produce a valid record.
    #[error("generation error: record {record} still tied after {attempts} redraws")]
    Generation { record: usize, attempts: usize },

    /// Non-finite value encountered during an iterative computation.
    #[error("numerical error: {message}")]
    Numerical {
        message: String,
        iteration: Option<u64>,
    },

    /// Calibration temperature is unidentifiable.
    #[error("calibration error: {0}")]
    Calibration(String),

    /// Score normalization cannot be performed.
    #[error("normalization error: {0}")]
    Normalization(String),

    /// Input exceeds the supported exact-combinatorics range.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Least-squares fit could not be computed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Numerical integration did not converge.
    #[error("integration error: {0}")]
    Integration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>, iteration: Option<u64>) -> Self {
        Error::Numerical {
            message: message.into(),
            iteration,
        }
    }
}
