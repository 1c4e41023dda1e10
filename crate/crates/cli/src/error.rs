use std::path::Path;

/// Process exit codes.
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BAD_ARGS: i32 = 2;
pub const EXIT_MODEL_LOAD: i32 = 3;
pub const EXIT_DECODE: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    BadArgs(String),
    #[error("cannot load model {path}: {source}")]
    ModelLoad {
        path: String,
        #[source]
        source: tintline::Error,
    },
    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },
    #[error(transparent)]
    Core(#[from] tintline::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::BadArgs(_) => EXIT_BAD_ARGS,
            CliError::ModelLoad { .. } => EXIT_MODEL_LOAD,
            CliError::Decode { .. } => EXIT_DECODE,
            CliError::Core(tintline::Error::InvalidArgument(_) | tintline::Error::ShapeMismatch { .. }) => EXIT_BAD_ARGS,
            CliError::Core(tintline::Error::Decode(_) | tintline::Error::Image(_)) => EXIT_DECODE,
            CliError::Core(_) | CliError::Other(_) => EXIT_FAILURE,
        }
    }

    pub fn model_load(path: &Path, source: tintline::Error) -> Self {
        CliError::ModelLoad {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
