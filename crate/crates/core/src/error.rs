// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("duplicate index {0} in tuple")]
    DuplicateIndex(usize),

    #[error("rank {k} is not admissible for constructor {constructor} at arity {arity}; admissible ranks are 1..={max}")]
    InadmissibleRank {
        constructor: String,
        arity: usize,
        k: usize,
        max: usize,
    },

    #[error("input cloud is not centered (max column mean {0:e})")]
    NotCentered(f64),

    #[error("orthogonal matrix has determinant {0}; a proper rotation is required")]
    Reflection(f64),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("digest mismatch for {path}: expected {expected}, found {found}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("audit failed: {0}")]
    Audit(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
