//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Unified error for raster, format, dataset, model, and metric operations.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// Underlying I/O failure, annotated with the path being touched.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file violates the tensor container format (bad magic, version,
    /// dtype, dimension count, or payload length).
    #[error("bad tensor file {path}: {reason}")]
    BadTensor { path: PathBuf, reason: String },

    /// Shapes that must agree do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation that needs at least one qualifying element got none
    /// (empty evaluation mask, no pixels above a threshold, ...).
    #[error("empty support: {0}")]
    EmptySupport(String),

    /// A statistic is undefined for the given data (e.g. constant ground
    /// truth makes the coefficient of determination meaningless).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A manifest or checkpoint file is syntactically or semantically broken.
    #[error("bad manifest {path}: {reason}")]
    BadManifest { path: PathBuf, reason: String },
}

impl CoreError {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
