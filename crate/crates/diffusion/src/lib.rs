//! Adapter around a latent text-to-image denoiser: video inflation,
//! attention capture, WAS score maps, forward noising and the gradient of
//! score maps with respect to the latent.

pub mod backend;
pub mod bundle;
pub mod error;
pub mod mini;
pub mod schedule;
pub mod state;
pub mod stub;
pub mod tensor;

pub use backend::{DiffusionBackend, WasVjp};
pub use bundle::{compute_was_maps, AttentionBundle, CrossLayer, SelfLayer};
pub use error::{DiffusionError, Result};
pub use mini::{inflate, AttentionScope, ForwardOutput, MiniLdm, MiniLdmConfig, MODEL_CACHE_ENV};
pub use schedule::{LatentState, NoiseSchedule};
pub use state::{CrossAttentionKv, SegModelState};
pub use stub::{ScoreBackend, ScoreFn};
