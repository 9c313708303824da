use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the embedding library.
#[derive(Debug, Error)]
pub enum KseError {
    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Data is valid but too degenerate for the requested operation
    /// (all distances zero, a zero-degree graph node, a single cluster, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// An eigenvalue needed as a divisor is numerically zero.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// An iterative routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A requested index exceeds what can be evaluated in floating point.
    #[error("out of range: {0}")]
    Range(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A CSV cell could not be parsed. `row` and `col` are 1-based.
    #[error("parse error in {path} at row {row}, column {col}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        message: String,
    },
}

impl KseError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        KseError::Input(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        KseError::Degenerate(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KseError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, KseError>;
