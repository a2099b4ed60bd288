use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: format error at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: row {row}, column {column}: {message}")]
    Ingest {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("enumeration refused: model has {units} binary units, budget is {budget}")]
    BudgetExceeded { units: usize, budget: usize },

    #[error("exact enumeration requires binary visible units (unit {0} is Gaussian)")]
    NonBinary(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
