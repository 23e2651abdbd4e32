use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the library.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// configuration problems, data problems and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("voxel ({0}, {1}, {2}) outside volume")]
    OutOfBounds(i64, i64, i64),
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("geometry does not fit inside the raster box: {0}")]
    OutsideRaster(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown class label {0:?}")]
    UnknownLabel(String),
    #[error("artifact differs from the recorded run: {0}")]
    ArtifactMismatch(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Broad failure category, used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) | Error::InvalidArgument(_) => ErrorCategory::Config,
            Error::Numeric(_) | Error::Diverged { .. } => ErrorCategory::Numeric,
            Error::Stage { source, .. } => source.category(),
            _ => ErrorCategory::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numeric,
}
