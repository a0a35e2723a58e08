use thiserror::Error;

pub type Result<T, E = TrackingError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("tracker unavailable: {0}")]
    TrackerUnavailable(String),

    #[error("video has {0} frame(s); tracking needs at least 2")]
    VideoTooShort(usize),

    #[error("attention size {attn:?} exceeds frame size {frame:?}")]
    AttentionLargerThanFrame {
        attn: (usize, usize),
        frame: (usize, usize),
    },

    #[error(transparent)]
    Core(#[from] smite_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
