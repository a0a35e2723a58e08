use thiserror::Error;

pub type Result<T, E = DiffusionError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("attention bundle has no layers")]
    EmptyBundle,

    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),

    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),

    #[error("frame size {size} is not divisible by {factor}")]
    DimensionNotDivisible { size: usize, factor: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("timestep {t} outside schedule range 0..={max}")]
    InvalidTimestep { t: usize, max: usize },

    #[error("invalid attention maps: {0}")]
    InvalidAttention(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Core(#[from] smite_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
