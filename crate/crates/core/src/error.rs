use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the feature extraction and adaptation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or call parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data violates a structural requirement (shape, finiteness, symmetry).
    #[error("invalid data: {0}")]
    Data(String),

    /// A relative quantity was requested with a zero denominator.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    /// An optimizer iterate became non-finite.
    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    /// A file could not be parsed.
    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}

pub(crate) fn format_err(path: impl Into<PathBuf>, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.into(),
        reason: reason.into(),
    }
}
