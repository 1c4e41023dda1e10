use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data failed validation (non-finite pixels, out-of-range values).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A caller-supplied argument violates the operation's contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor shapes disagree; `dim` names the offending dimension.
    #[error("shape mismatch in {what}: {dim} expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        dim: &'static str,
        expected: i64,
        actual: i64,
    },

    #[error("feature extractor not initialized: {0}")]
    ExtractorNotInitialized(&'static str),

    #[error("corpus too small: {found} images, need at least {required}")]
    CorpusTooSmall { found: usize, required: usize },

    #[error("dataset is empty: {0}")]
    EmptyDataset(PathBuf),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("architecture mismatch: expected '{expected}', found '{found}'")]
    ArchitectureMismatch { expected: String, found: String },

    #[error("image decode error: {0}")]
    Decode(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Torch(#[from] tch::TchError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
