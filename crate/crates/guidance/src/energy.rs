//! Guidance energy on the normalized score stack and its gradient back to
//! the latent.

use ndarray::{s, Array4, Axis};
use serde::Serialize;
use smite_consistency::{
    energy_reg_grad, energy_tracking_grad, make_lowpass, SpectralFilter, TargetMode, TrackedScores,
};
use smite_core::{softmax_channels, softmax_vjp, GuidanceConfig, WasMapStack};
use smite_diffusion::{DiffusionBackend, LatentState, SegModelState};

use crate::error::{GuidanceError, Result};

/// Per-term energies at one iterate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyTerms {
    pub tracking: f64,
    pub reg: f64,
    pub total: f64,
}

/// Constants the energy is measured against. None of them depend on the
/// latent being optimized.
#[derive(Debug, Clone)]
pub struct EnergyTargets {
    /// Voted scores; `None` when the tracking term is off.
    pub tracked: Option<TrackedScores>,
    /// Normalized scores frozen at the first denoising step.
    pub reference: WasMapStack,
    pub filter: SpectralFilter,
}

impl EnergyTargets {
    /// Restricts the targets to a frame range, rebuilding the low-pass mask
    /// for the shorter clip.
    pub fn frame_range(&self, range: std::ops::Range<usize>, threshold: f64) -> Result<Self> {
        let reference = self.reference.frame_range(range.clone());
        let tracked = self.tracked.as_ref().map(|t| TrackedScores {
            scores: t.scores.frame_range(range.clone()),
            updated: t.updated.slice(s![range.clone(), .., ..]).to_owned(),
        });
        let (m, _, h, w) = reference.scores.dim();
        Ok(Self {
            tracked,
            reference,
            filter: make_lowpass((m, h, w), threshold)?,
        })
    }
}

/// Energy of a normalized stack and `∂E/∂S`.
pub fn score_energy(
    scores: &WasMapStack,
    targets: &EnergyTargets,
    cfg: &GuidanceConfig,
) -> Result<(EnergyTerms, Array4<f64>)> {
    let mut grad = Array4::<f64>::zeros(scores.scores.raw_dim());
    let mut terms = EnergyTerms::default();
    if cfg.lambda_tracking > 0.0 {
        let tracked = targets.tracked.as_ref().ok_or(GuidanceError::MissingTracks)?;
        let mode = if cfg.soft_targets {
            TargetMode::Soft
        } else {
            TargetMode::Hard
        };
        let e = energy_tracking_grad(scores, tracked, mode)?;
        terms.tracking = e.value;
        grad.scaled_add(cfg.lambda_tracking, &e.grad);
    }
    if cfg.lambda_reg > 0.0 {
        let e = energy_reg_grad(scores, &targets.reference, &targets.filter)?;
        terms.reg = e.value;
        grad.scaled_add(cfg.lambda_reg, &e.grad);
    }
    terms.total = cfg.lambda_tracking * terms.tracking + cfg.lambda_reg * terms.reg;
    Ok((terms, grad))
}

/// Energy and gradient with respect to the latent.
#[derive(Debug, Clone)]
pub struct LatentEnergy {
    pub terms: EnergyTerms,
    pub grad: Array4<f64>,
    /// Normalized scores at the evaluated latent.
    pub scores: WasMapStack,
}

/// `E(z) = λ_T·E_track(softmax(S(z))) + λ_R·E_reg(softmax(S(z)))`, with the
/// gradient taken through the channel softmax and the backend's WAS maps.
pub fn total_energy(
    backend: &dyn DiffusionBackend,
    latent: &LatentState,
    state: &SegModelState,
    targets: &EnergyTargets,
    cfg: &GuidanceConfig,
) -> Result<LatentEnergy> {
    let scores = softmax_channels(&backend.was_scores(latent, state)?);
    let (terms, dscores) = score_energy(&scores, targets, cfg)?;
    if !terms.total.is_finite() {
        return Err(GuidanceError::NonFiniteEnergy { step: 0, iter: 0 });
    }
    let grad = if dscores.iter().all(|&g| g == 0.0) {
        Array4::zeros(latent.z.raw_dim())
    } else {
        let upstream = softmax_vjp(&scores.scores, &dscores);
        backend.was_vjp(latent, state, &upstream)?.grad
    };
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(GuidanceError::NonFiniteEnergy { step: 0, iter: 0 });
    }
    Ok(LatentEnergy { terms, grad, scores })
}

/// As [`total_energy`], but each run of `window` frames is evaluated and
/// differentiated on its own, so attention never spans more than `window`
/// frames. Energies are summed over windows.
pub fn windowed_energy(
    backend: &dyn DiffusionBackend,
    latent: &LatentState,
    state: &SegModelState,
    targets: &EnergyTargets,
    cfg: &GuidanceConfig,
    window: usize,
) -> Result<LatentEnergy> {
    let frames = latent.frames();
    if window == 0 || window >= frames {
        return total_energy(backend, latent, state, targets, cfg);
    }
    let mut grad = Array4::<f64>::zeros(latent.z.raw_dim());
    let mut parts = Vec::new();
    let mut terms = EnergyTerms::default();
    for start in (0..frames).step_by(window) {
        let range = start..(start + window).min(frames);
        let sub = latent.frame_range(range.clone());
        let sub_targets = targets.frame_range(range.clone(), cfg.dct_threshold)?;
        let e = total_energy(backend, &sub, state, &sub_targets, cfg)?;
        grad.slice_mut(s![range, .., .., ..]).assign(&e.grad);
        terms.tracking += e.terms.tracking;
        terms.reg += e.terms.reg;
        terms.total += e.terms.total;
        parts.push(e.scores.scores);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let scores = ndarray::concatenate(Axis(0), &views).map_err(|e| GuidanceError::ShapeMismatch(e.to_string()))?;
    Ok(LatentEnergy {
        terms,
        grad,
        scores: WasMapStack::new(scores),
    })
}
