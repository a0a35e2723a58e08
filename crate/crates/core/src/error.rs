use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("image `{0}` has no matching `_mask.png`")]
    MissingMask(PathBuf),

    #[error("mask `{path}` contains label {found}, but K = {k}")]
    LabelMismatch { path: PathBuf, found: u8, k: u8 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("scores contain non-finite values")]
    NonFiniteInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed file `{path}`: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("no frames found in `{0}`")]
    EmptyVideo(PathBuf),

    #[error("png decode error in `{path}`: {source}")]
    PngDecode {
        path: PathBuf,
        #[source]
        source: png::DecodingError,
    },

    #[error("png encode error in `{path}`: {source}")]
    PngEncode {
        path: PathBuf,
        #[source]
        source: png::EncodingError,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        CoreError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
