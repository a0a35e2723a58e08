//! A backend whose latent *is* the score field: handy for exercising the
//! guidance loop without a denoiser.

use std::sync::Arc;

use ndarray::{s, Array3, Array4};
use smite_core::{VideoClip, WasMapStack};

use crate::backend::{check_divisible, DiffusionBackend, WasVjp};
use crate::bundle::{AttentionBundle, CrossLayer, SelfLayer};
use crate::error::{DiffusionError, Result};
use crate::schedule::{LatentState, NoiseSchedule};
use crate::state::SegModelState;

/// Maps one RGB frame to `(K+1, h, w)` logits at the given cell size.
pub type ScoreFn = dyn Fn(&Array3<u8>, usize) -> Array3<f64> + Send + Sync;

/// The latent holds per-frame segment logits produced by a scoring closure.
/// Noise prediction is zero and denoising only moves the timestep, so the
/// only thing that changes the latent is guidance. The WAS stack equals the
/// latent and its vector-Jacobian product is the identity.
#[derive(Clone)]
pub struct ScoreBackend {
    id: String,
    num_segments: u8,
    cell: usize,
    score_fn: Arc<ScoreFn>,
    schedule: NoiseSchedule,
}

impl std::fmt::Debug for ScoreBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScoreBackend")
            .field("id", &self.id)
            .field("num_segments", &self.num_segments)
            .field("cell", &self.cell)
            .finish()
    }
}

impl ScoreBackend {
    pub fn new(id: impl Into<String>, num_segments: u8, cell: usize, score_fn: Arc<ScoreFn>) -> Self {
        ScoreBackend {
            id: id.into(),
            num_segments,
            cell,
            score_fn,
            schedule: NoiseSchedule::default(),
        }
    }

    /// A state whose only meaningful content is K and the model id.
    pub fn state(&self) -> SegModelState {
        SegModelState {
            text_embeddings: ndarray::Array2::zeros((self.num_segments as usize + 1, 1)),
            cross_attention: Vec::new(),
            base_model_id: self.id.clone(),
            capture: "scores".into(),
        }
    }
}

impl DiffusionBackend for ScoreBackend {
    fn model_id(&self) -> &str {
        &self.id
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn frame_multiple(&self) -> usize {
        self.cell
    }

    fn score_resolution(&self, latent: &LatentState) -> (usize, usize) {
        let (_, _, h, w) = latent.z.dim();
        (h, w)
    }

    fn check_state(&self, state: &SegModelState) -> Result<()> {
        if state.base_model_id != self.id || state.num_segments() != self.num_segments {
            return Err(DiffusionError::Checkpoint(format!(
                "state for `{}` with K = {} does not fit `{}` with K = {}",
                state.base_model_id,
                state.num_segments(),
                self.id,
                self.num_segments
            )));
        }
        Ok(())
    }

    fn encode_video(&self, video: &VideoClip) -> Result<LatentState> {
        let (hh, ww) = video.frame_size();
        check_divisible((hh, ww), self.cell)?;
        let (h, w) = (hh / self.cell, ww / self.cell);
        let k1 = self.num_segments as usize + 1;
        let mut z = Array4::zeros((video.len(), k1, h, w));
        for (f, frame) in video.frames().iter().enumerate() {
            let logits = (self.score_fn)(frame, self.cell);
            if logits.dim() != (k1, h, w) {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "score function returned {:?}, expected {:?}",
                    logits.dim(),
                    (k1, h, w)
                )));
            }
            z.slice_mut(s![f, .., .., ..]).assign(&logits);
        }
        Ok(LatentState { z, timestep: 0 })
    }

    fn add_noise(&self, latent: &LatentState, t: usize, _seed: u64) -> Result<LatentState> {
        self.schedule.alpha_bar(t)?;
        Ok(LatentState {
            z: latent.z.clone(),
            timestep: t,
        })
    }

    fn predict_noise(&self, latent: &LatentState, state: &SegModelState) -> Result<Array4<f64>> {
        self.check_state(state)?;
        Ok(Array4::zeros(latent.z.dim()))
    }

    fn denoise_step(&self, latent: &LatentState, t_prev: usize, state: &SegModelState) -> Result<LatentState> {
        self.check_state(state)?;
        if t_prev > latent.timestep {
            return Err(DiffusionError::InvalidTimestep {
                t: t_prev,
                max: latent.timestep,
            });
        }
        Ok(LatentState {
            z: latent.z.clone(),
            timestep: t_prev,
        })
    }

    /// Per-frame identity self-attention and the channel softmax of the
    /// logits as cross-attention.
    fn capture_attention(&self, latent: &LatentState, state: &SegModelState) -> Result<AttentionBundle> {
        self.check_state(state)?;
        let probs = smite_core::softmax_channels(&WasMapStack::new(latent.z.clone()));
        let (f, _, h, w) = latent.z.dim();
        Ok(AttentionBundle {
            frames: f,
            cross: vec![CrossLayer { maps: probs.scores }],
            self_attn: vec![SelfLayer {
                resolution: (h, w),
                maps: ndarray::Array2::eye(f * h * w),
            }],
            segment_tokens: 0..self.num_segments as usize + 1,
            output_resolution: None,
        })
    }

    fn was_scores(&self, latent: &LatentState, state: &SegModelState) -> Result<WasMapStack> {
        self.check_state(state)?;
        Ok(WasMapStack::new(latent.z.clone()))
    }

    fn was_vjp(&self, latent: &LatentState, state: &SegModelState, upstream: &Array4<f64>) -> Result<WasVjp> {
        self.check_state(state)?;
        if upstream.dim() != latent.z.dim() {
            return Err(DiffusionError::ShapeMismatch(format!(
                "upstream {:?} vs latent {:?}",
                upstream.dim(),
                latent.z.dim()
            )));
        }
        Ok(WasVjp {
            scores: WasMapStack::new(latent.z.clone()),
            grad: upstream.clone(),
        })
    }
}
