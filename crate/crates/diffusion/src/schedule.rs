//! Forward-noising schedule and deterministic DDIM steps.

use ndarray::{Array4, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DiffusionError, Result};

/// Latent with the timestep it currently sits at. Timestep 0 is clean.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// `(frames, channels, h, w)`.
    pub z: Array4<f64>,
    pub timestep: usize,
}

impl LatentState {
    pub fn frames(&self) -> usize {
        self.z.dim().0
    }

    pub fn is_finite(&self) -> bool {
        self.z.iter().all(|v| v.is_finite())
    }

    pub fn frame_range(&self, range: std::ops::Range<usize>) -> Self {
        LatentState {
            z: self.z.slice(ndarray::s![range, .., .., ..]).to_owned(),
            timestep: self.timestep,
        }
    }
}

/// Scaled-linear beta schedule (`√β` linear between the endpoints).
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    /// `alpha_bar[t]` for `t = 0..=steps`; `alpha_bar[0] = 1`.
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn scaled_linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
        let mut prod = 1.0;
        for i in 0..steps {
            let frac = if steps > 1 { i as f64 / (steps - 1) as f64 } else { 0.0 };
            let beta = (a + (b - a) * frac).powi(2);
            prod *= 1.0 - beta;
            alpha_bar.push(prod);
        }
        NoiseSchedule { alpha_bar }
    }

    pub fn max_timestep(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar.get(t).copied().ok_or(DiffusionError::InvalidTimestep {
            t,
            max: self.max_timestep(),
        })
    }

    /// `z_t = √ᾱ_t · z + √(1−ᾱ_t) · ε`.
    pub fn add_noise(&self, latent: &LatentState, noise: &Array4<f64>, t: usize) -> Result<LatentState> {
        if latent.timestep != 0 {
            return Err(DiffusionError::InvalidTimestep {
                t: latent.timestep,
                max: 0,
            });
        }
        if noise.dim() != latent.z.dim() {
            return Err(DiffusionError::ShapeMismatch(format!(
                "noise {:?} vs latent {:?}",
                noise.dim(),
                latent.z.dim()
            )));
        }
        let ab = self.alpha_bar(t)?;
        let z = if t == 0 {
            latent.z.clone()
        } else {
            &latent.z * ab.sqrt() + noise * (1.0 - ab).sqrt()
        };
        Ok(LatentState { z, timestep: t })
    }

    /// Deterministic DDIM move from `latent.timestep` to `t_prev` given the
    /// model's noise estimate.
    pub fn ddim_step(&self, latent: &LatentState, eps: &Array4<f64>, t_prev: usize) -> Result<LatentState> {
        if t_prev > latent.timestep {
            return Err(DiffusionError::InvalidTimestep {
                t: t_prev,
                max: latent.timestep,
            });
        }
        let ab = self.alpha_bar(latent.timestep)?;
        let ab_prev = self.alpha_bar(t_prev)?;
        let x0 = (&latent.z - &(eps * (1.0 - ab).sqrt())) / ab.sqrt();
        let z = x0 * ab_prev.sqrt() + eps * (1.0 - ab_prev).sqrt();
        Ok(LatentState { z, timestep: t_prev })
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule::scaled_linear(1000, 0.00085, 0.012)
    }
}

/// Standard-normal noise drawn once per frame shape and shared by every
/// frame, so identical frames stay identical after noising.
pub fn shared_frame_noise(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let (frames, c, h, w) = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = Array4::from_shape_simple_fn((1, c, h, w), || StandardNormal.sample(&mut rng));
    let mut out = Array4::zeros(shape);
    for mut f in out.axis_iter_mut(Axis(0)) {
        f.assign(&one.index_axis(Axis(0), 0));
    }
    debug_assert_eq!(out.dim().0, frames);
    out
}

/// Independent standard-normal noise for every entry.
pub fn iid_noise(shape: (usize, usize, usize, usize), seed: u64) -> Array4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn(shape, || StandardNormal.sample(&mut rng))
}
