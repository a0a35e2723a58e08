//! The interface the trainer and the guidance loop drive.

use ndarray::Array4;
use smite_core::{VideoClip, WasMapStack};

use crate::bundle::{compute_was_maps, AttentionBundle};
use crate::error::{DiffusionError, Result};
use crate::schedule::{shared_frame_noise, LatentState, NoiseSchedule};
use crate::state::SegModelState;

/// WAS scores together with a vector-Jacobian product back to the latent.
#[derive(Debug, Clone)]
pub struct WasVjp {
    pub scores: WasMapStack,
    /// `Σ upstream ⊙ ∂S/∂z`, shaped like the latent.
    pub grad: Array4<f64>,
}

pub trait DiffusionBackend {
    fn model_id(&self) -> &str;

    fn schedule(&self) -> &NoiseSchedule;

    /// Frame sides must be multiples of this.
    fn frame_multiple(&self) -> usize;

    /// Spatial size of the WAS stack produced for a latent.
    fn score_resolution(&self, latent: &LatentState) -> (usize, usize);

    /// Rejects states built for another model.
    fn check_state(&self, state: &SegModelState) -> Result<()>;

    fn encode_video(&self, video: &VideoClip) -> Result<LatentState>;

    /// Forward noising with noise shared across frames.
    fn add_noise(&self, latent: &LatentState, t: usize, seed: u64) -> Result<LatentState> {
        let noise = shared_frame_noise(latent.z.dim(), seed);
        self.schedule().add_noise(latent, &noise, t)
    }

    fn predict_noise(&self, latent: &LatentState, state: &SegModelState) -> Result<Array4<f64>>;

    fn denoise_step(&self, latent: &LatentState, t_prev: usize, state: &SegModelState) -> Result<LatentState> {
        let eps = self.predict_noise(latent, state)?;
        self.schedule().ddim_step(latent, &eps, t_prev)
    }

    fn capture_attention(&self, latent: &LatentState, state: &SegModelState) -> Result<AttentionBundle>;

    /// Unnormalized WAS stack for the latent.
    fn was_scores(&self, latent: &LatentState, state: &SegModelState) -> Result<WasMapStack> {
        compute_was_maps(&self.capture_attention(latent, state)?)
    }

    /// WAS stack and the gradient of `Σ upstream ⊙ S` with respect to the latent.
    fn was_vjp(&self, latent: &LatentState, state: &SegModelState, upstream: &Array4<f64>) -> Result<WasVjp>;

    /// Rough peak bytes held by attention matrices during `was_vjp`.
    fn attention_bytes(&self, _latent: &LatentState) -> usize {
        0
    }
}

pub(crate) fn check_divisible(size: (usize, usize), factor: usize) -> Result<()> {
    for s in [size.0, size.1] {
        if s % factor != 0 {
            return Err(DiffusionError::DimensionNotDivisible { size: s, factor });
        }
    }
    Ok(())
}
