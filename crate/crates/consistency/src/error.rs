use thiserror::Error;

pub type Result<T, E = ConsistencyError> = std::result::Result<T, E>;

#[derive(Debug, Error, PartialEq)]
pub enum ConsistencyError {
    #[error("score resolution {scores:?} does not match track grid {tracks:?}")]
    ResolutionMismatch {
        scores: (usize, usize),
        tracks: (usize, usize),
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("low-pass threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
}
