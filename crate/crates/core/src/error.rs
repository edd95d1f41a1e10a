use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation and reconstruction chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("need at least {required} frames, accumulator holds {actual}")]
    TooFewFrames { required: u64, actual: u64 },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration or usage rather than by data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParam(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
