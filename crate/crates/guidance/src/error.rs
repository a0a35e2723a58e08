use thiserror::Error;

pub type Result<T, E = GuidanceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("guidance energy became non-finite at step {step}, iteration {iter}")]
    NonFiniteEnergy { step: usize, iter: usize },

    #[error("segment count mismatch: model state has K = {state}, input has K = {input}")]
    KMismatch { state: usize, input: usize },

    #[error("tracking energy is enabled but no point tracks were supplied")]
    MissingTracks,

    #[error("attention needs about {needed} bytes, budget is {budget}; process the clip in slices")]
    OutOfMemory { needed: usize, budget: usize },

    #[error("coarse labels contain no foreground")]
    EmptyForeground,

    #[error("invalid slicing: {0}")]
    InvalidSlice(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Diffusion(#[from] smite_diffusion::DiffusionError),

    #[error(transparent)]
    Consistency(#[from] smite_consistency::ConsistencyError),

    #[error(transparent)]
    Tracking(#[from] smite_tracking::TrackingError),

    #[error(transparent)]
    Core(#[from] smite_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
