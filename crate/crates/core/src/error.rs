use std::io;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pbm parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no components")]
    NoComponents,

    #[error("radius mismatch: {0} vs {1}")]
    RadiusMismatch(u32, u32),

    /// An empirical N-distance fell below the rounding tolerance. Only a
    /// broken kernel can produce this.
    #[error("negative N-distance {0:e}")]
    NegativeDistance(f64),

    #[error("feature file record {index}: {message}")]
    FeatureRecord { index: usize, message: String },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
