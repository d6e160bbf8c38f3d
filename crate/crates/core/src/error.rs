//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type. Variants are grouped so callers (notably the CLI)
/// can map them onto distinct failure classes.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor operation received incompatible shapes.
    #[error("shape mismatch in `{op}`: expected {expected}, got {actual}")]
    Shape {
        op: String,
        expected: String,
        actual: String,
    },

    /// Invalid configuration (bad field values, unresolvable paths, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// A computation produced a non-finite value or diverged.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A metric is undefined for the given inputs.
    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            op: op.to_string(),
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
