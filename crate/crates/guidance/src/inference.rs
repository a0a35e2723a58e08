//! Noising, per-step temporal voting, guided latent updates and denoising
//! for one clip.

use ndarray::{s, Array4};
use smite_consistency::{make_lowpass, vote_all};
use smite_core::resize::resize_volume;
use smite_core::{softmax_channels, GuidanceConfig, LabelVideo, TrackTable, VideoClip, WasMapStack};
use smite_diffusion::{DiffusionBackend, LatentState, SegModelState};
use smite_tracking::{project_tracks, ProjectedTracks, WindowLayout};

use crate::energy::{windowed_energy, EnergyTargets};
use crate::error::{GuidanceError, Result};
use crate::manifest::{RunManifest, SliceRecord, StepRecord};
use crate::optimizer::{guided_update, OptimizerState};

/// Attention memory budget in MiB; unset means unlimited.
pub const MEMORY_BUDGET_ENV: &str = "SMITE_MEMORY_BUDGET_MB";

#[derive(Debug, Clone)]
pub struct InferenceOutput {
    pub labels: LabelVideo,
    /// Normalized scores at the attention resolution.
    pub scores: WasMapStack,
    pub manifest: RunManifest,
}

/// Timesteps at which guidance runs: `steps` evenly spaced values from `t0`
/// down towards zero, `t0` first.
pub fn denoising_timesteps(t0: usize, steps: usize) -> Vec<usize> {
    let steps = steps.max(1);
    (0..steps).map(|i| t0 - i * t0 / steps).collect()
}

/// Bilinear upsampling of the scores to the frame size, then a per-pixel
/// argmax with ties to the lowest label.
pub fn labels_from_scores(scores: &WasMapStack, frame_size: (usize, usize), num_segments: usize) -> Result<LabelVideo> {
    let up = WasMapStack::new(resize_volume(&scores.scores, frame_size.0, frame_size.1));
    Ok(LabelVideo::new(up.argmax(), num_segments as u8)?)
}

/// Per-step state of the trailing frames of a clip, replayed verbatim when
/// those frames open the next clip.
#[derive(Debug, Clone)]
pub(crate) struct Carry {
    pub frames: usize,
    /// One entry per guidance step (after its updates), then the final latent.
    pub latents: Vec<Array4<f64>>,
    pub reference: Array4<f64>,
}

fn memory_budget() -> Option<usize> {
    let mb: usize = std::env::var(MEMORY_BUDGET_ENV).ok()?.trim().parse().ok()?;
    Some(mb * 1024 * 1024)
}

fn check_budget(backend: &dyn DiffusionBackend, latent: &LatentState, cfg: &GuidanceConfig) -> Result<()> {
    let Some(budget) = memory_budget() else {
        return Ok(());
    };
    let frames = latent.frames();
    let window = if cfg.grad_window == 0 {
        frames
    } else {
        cfg.grad_window.min(frames)
    };
    let needed = backend.attention_bytes(&latent.frame_range(0..window));
    if needed > budget {
        return Err(GuidanceError::OutOfMemory { needed, budget });
    }
    Ok(())
}

fn tail(z: &Array4<f64>, keep: usize) -> Array4<f64> {
    let f = z.dim().0;
    z.slice(s![f - keep.min(f).., .., .., ..]).to_owned()
}

fn at_iteration(err: GuidanceError, step: usize, iter: usize) -> GuidanceError {
    match err {
        GuidanceError::NonFiniteEnergy { .. } => GuidanceError::NonFiniteEnergy { step, iter },
        other => other,
    }
}

/// Segments a clip. With guidance disabled the scores of a single denoiser
/// pass at the noised latent are used directly.
pub fn run_inference(
    backend: &dyn DiffusionBackend,
    video: &VideoClip,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    tracks: Option<&TrackTable>,
) -> Result<InferenceOutput> {
    let (mut out, _) = run_clip(backend, video, state, cfg, tracks, None, 0)?;
    out.manifest.slices.push(SliceRecord {
        start: 0,
        end: video.len(),
        carried: 0,
    });
    Ok(out)
}

pub(crate) fn run_clip(
    backend: &dyn DiffusionBackend,
    video: &VideoClip,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    tracks: Option<&TrackTable>,
    carry: Option<&Carry>,
    keep: usize,
) -> Result<(InferenceOutput, Carry)> {
    cfg.validate()?;
    backend.check_state(state)?;
    let frames = video.len();
    if let Some(t) = tracks {
        if t.frames != frames {
            return Err(GuidanceError::ShapeMismatch(format!(
                "tracks cover {} frames, clip has {frames}",
                t.frames
            )));
        }
    }
    let carried = carry.map_or(0, |c| c.frames);
    if carried >= frames {
        return Err(GuidanceError::InvalidSlice(format!(
            "{carried} carried frames leave nothing new in a {frames}-frame clip"
        )));
    }
    let k = state.num_segments() as usize;
    let clean = backend.encode_video(video)?;
    let mut z = backend.add_noise(&clean, cfg.noise_timesteps, cfg.seed)?;
    check_budget(backend, &z, cfg)?;
    let res = backend.score_resolution(&z);
    let substitute = |z: &mut LatentState, idx: usize| {
        if let Some(c) = carry {
            z.z.slice_mut(s![..c.frames, .., .., ..]).assign(&c.latents[idx]);
        }
    };

    let mut manifest = RunManifest {
        model_id: backend.model_id().to_string(),
        num_segments: k,
        frames,
        frame_size: video.frame_size(),
        score_resolution: res,
        guidance: cfg.guidance_enabled(),
        config: cfg.clone(),
        steps: Vec::new(),
        slices: Vec::new(),
        crops: None,
    };
    let mut saved = Vec::new();
    let (scores, reference) = if !cfg.guidance_enabled() {
        substitute(&mut z, 0);
        let scores = softmax_channels(&backend.was_scores(&z, state)?);
        saved.push(tail(&z.z, keep));
        let reference = scores.scores.clone();
        (scores, reference)
    } else {
        let projected: Option<ProjectedTracks> = if cfg.lambda_tracking > 0.0 {
            let table = tracks.ok_or(GuidanceError::MissingTracks)?;
            let layout = WindowLayout {
                window_size: cfg.window_size,
                stride: cfg.vote_stride,
            };
            Some(project_tracks(table, video.frame_size(), res, layout)?)
        } else {
            None
        };
        let filter = make_lowpass((frames, res.0, res.1), cfg.dct_threshold)?;
        let mut opt = OptimizerState::from_config(z.z.dim(), cfg);
        let timesteps = denoising_timesteps(cfg.noise_timesteps, cfg.denoising_steps);
        let mut reference: Option<WasMapStack> = None;
        for (step, &t) in timesteps.iter().enumerate() {
            substitute(&mut z, step);
            let scores = softmax_channels(&backend.was_scores(&z, state)?);
            let reference = reference
                .get_or_insert_with(|| {
                    let mut r = scores.clone();
                    if let Some(c) = carry {
                        r.scores.slice_mut(s![..c.frames, .., .., ..]).assign(&c.reference);
                    }
                    r
                })
                .clone();
            let tracked = match &projected {
                Some(p) => Some(vote_all(&scores, p, cfg.window_size, cfg.vote_stride)?),
                None => None,
            };
            let tracked_cells = tracked.as_ref().map_or(0, |t| t.updated_count());
            let targets = EnergyTargets {
                tracked,
                reference,
                filter: filter.clone(),
            };
            let learning_rate = cfg.learning_rate(step);
            let mut energies = Vec::with_capacity(cfg.guidance_iters_per_step);
            for iter in 0..cfg.guidance_iters_per_step {
                let e = windowed_energy(backend, &z, state, &targets, cfg, cfg.grad_window)
                    .map_err(|e| at_iteration(e, step, iter))?;
                energies.push(e.terms);
                let mut grad = e.grad;
                grad.slice_mut(s![..carried, .., .., ..]).fill(0.0);
                z = guided_update(&z, &grad, &mut opt, learning_rate)?;
            }
            log::debug!(
                "step {step} (t = {t}): energy {:.6} -> {:.6}",
                energies.first().map_or(0.0, |e| e.total),
                energies.last().map_or(0.0, |e| e.total)
            );
            manifest.steps.push(StepRecord {
                step,
                timestep: t,
                learning_rate,
                tracked_cells,
                energies,
            });
            saved.push(tail(&z.z, keep));
            let t_prev = timesteps.get(step + 1).copied().unwrap_or(0);
            z = backend.denoise_step(&z, t_prev, state)?;
        }
        substitute(&mut z, timesteps.len());
        let scores = softmax_channels(&backend.was_scores(&z, state)?);
        saved.push(tail(&z.z, keep));
        (scores, reference.map(|r| r.scores).unwrap_or_default())
    };
    if !scores.is_finite() {
        return Err(GuidanceError::NonFiniteEnergy {
            step: manifest.steps.len(),
            iter: 0,
        });
    }
    let labels = labels_from_scores(&scores, video.frame_size(), k)?;
    let next = Carry {
        frames: keep,
        latents: saved,
        reference: tail(&reference, keep),
    };
    Ok((
        InferenceOutput {
            labels,
            scores,
            manifest,
        },
        next,
    ))
}
