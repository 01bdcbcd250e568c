use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("internal error: {0}")]
    Internal(String),

    /// Non-finite values showed up in training.
    #[error("training diverged at step {step} (lr {lr:e}): {detail}")]
    Divergence { step: u64, lr: f64, detail: String },

    /// A network evaluation produced NaN or infinity.
    #[error("non-finite field output: {0}")]
    NonFinite(String),

    #[error("format error in `{field}`: {message}")]
    Format { field: String, message: String },

    #[error("unsupported NIfTI datatype code {0} (supported: uint8=2, int16=4, float32=16)")]
    UnsupportedDatatype(i16),

    #[error("invalid factor: {0}")]
    InvalidFactor(String),

    /// A precondition of a numerical routine was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid rotation axis: {0}")]
    InvalidAxis(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Path {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_path(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Path {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or unsupported input files.
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Error::Format { .. } | Error::UnsupportedDatatype(_) | Error::Json(_)
        )
    }

    /// True when the underlying cause is a missing file.
    pub fn is_not_found(&self) -> bool {
        match self {
            Error::Path { source, .. } | Error::Io(source) => {
                source.kind() == std::io::ErrorKind::NotFound
            }
            _ => false,
        }
    }
}
