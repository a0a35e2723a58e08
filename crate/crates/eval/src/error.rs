use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no annotated frames to evaluate")]
    NoAnnotatedFrames,

    #[error("ground truth has no foreground segment on any annotated frame")]
    EmptyGroundTruth,

    #[error("corrupt mask {path}: {reason}")]
    CorruptMask { path: PathBuf, reason: String },

    #[error("unknown ablation variant `{0}` (expected per-frame, +inflation, +ca-tuning, +tracking or +lp-reg)")]
    UnknownVariant(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error(transparent)]
    Guidance(#[from] smite_guidance::GuidanceError),

    #[error(transparent)]
    Diffusion(#[from] smite_diffusion::DiffusionError),

    #[error(transparent)]
    Tracking(#[from] smite_tracking::TrackingError),

    #[error(transparent)]
    Core(#[from] smite_core::CoreError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
