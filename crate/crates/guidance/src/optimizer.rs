//! Adam-style moment tracking for the latent.

use ndarray::{Array4, Zip};
use smite_core::GuidanceConfig;
use smite_diffusion::LatentState;

use crate::error::{GuidanceError, Result};

/// First and second moment estimates, zero-initialised and owned by one
/// inference run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m1: Array4<f64>,
    pub m2: Array4<f64>,
    pub step_count: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(shape: (usize, usize, usize, usize), beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            m1: Array4::zeros(shape),
            m2: Array4::zeros(shape),
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn from_config(shape: (usize, usize, usize, usize), cfg: &GuidanceConfig) -> Self {
        Self::new(shape, cfg.beta1, cfg.beta2, cfg.epsilon)
    }
}

/// One bias-corrected moment step on the latent:
///
/// ```text
/// M1 ← β1·M1 + (1−β1)·g        M2 ← β2·M2 + (1−β2)·g²
/// z  ← z − α · (M1 / (1−β1^n)) / (√(M2 / (1−β2^n)) + ε)
/// ```
///
/// with `n` the 1-based update count. The timestep is left alone.
pub fn guided_update(
    latent: &LatentState,
    grad: &Array4<f64>,
    opt: &mut OptimizerState,
    learning_rate: f64,
) -> Result<LatentState> {
    if grad.dim() != latent.z.dim() || opt.m1.dim() != latent.z.dim() {
        return Err(GuidanceError::ShapeMismatch(format!(
            "latent {:?}, gradient {:?}, moments {:?}",
            latent.z.dim(),
            grad.dim(),
            opt.m1.dim()
        )));
    }
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon);
    opt.step_count += 1;
    let c1 = 1.0 - b1.powi(opt.step_count as i32);
    let c2 = 1.0 - b2.powi(opt.step_count as i32);
    let mut z = latent.z.clone();
    Zip::from(&mut z)
        .and(&mut opt.m1)
        .and(&mut opt.m2)
        .and(grad)
        .for_each(|z, m1, m2, &g| {
            *m1 = b1 * *m1 + (1.0 - b1) * g;
            *m2 = b2 * *m2 + (1.0 - b2) * g * g;
            *z -= learning_rate * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
        });
    Ok(LatentState {
        z,
        timestep: latent.timestep,
    })
}
