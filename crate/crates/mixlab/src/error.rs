//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: `InvalidInput` and `Unsupported`
/// are precondition failures (exit 2), `Capacity` is a capacity error
/// (exit 3), everything else exits 1.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input file failed validation. Carries the field name.
    #[error("invalid input `{field}`: {message}")]
    InvalidInput { field: String, message: String },

    /// An operation was asked of a graph or kernel that cannot support it.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A size cap was exceeded (dense matrices, DP state spaces, ...).
    #[error("capacity exceeded for {what}: requested {requested}, limit {limit}")]
    Capacity {
        what: String,
        requested: u128,
        limit: u128,
    },

    /// An iteration failed to converge within its step cap.
    #[error("no convergence within {cap} steps: {context}")]
    Divergence { cap: u64, context: String },

    /// A linear-algebra or quadrature routine failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn capacity(what: &str, requested: u128, limit: u128) -> Self {
        Error::Capacity {
            what: what.to_string(),
            requested,
            limit,
        }
    }

    /// CLI exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput { .. } | Error::Unsupported(_) => 2,
            Error::Capacity { .. } => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
