use thiserror::Error;

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("references disagree on K: {0}")]
    InconsistentK(String),

    #[error("no reference examples")]
    NoReferences,

    #[error("loss became non-finite at iteration {iter}")]
    DivergedLoss { iter: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Diffusion(#[from] smite_diffusion::DiffusionError),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Core(#[from] smite_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
