//! Test-time latent guidance for temporally consistent segmentation:
//! energies on normalized score stacks, their gradient back to the
//! latent, moment-based latent updates, and the inference loop with its
//! long-clip and crop-refinement variants.

mod crop;
mod energy;
mod error;
mod inference;
mod long_video;
mod manifest;
mod optimizer;

pub use crop::{crop_boxes, crop_refine, foreground_box, CropBox, Refined, CROP_DILATION};
pub use energy::{score_energy, total_energy, windowed_energy, EnergyTargets, EnergyTerms, LatentEnergy};
pub use error::{GuidanceError, Result};
pub use inference::{denoising_timesteps, labels_from_scores, run_inference, InferenceOutput, MEMORY_BUDGET_ENV};
pub use long_video::{run_long_video, slice_plan, slice_tracks};
pub use manifest::{RunManifest, SliceRecord, StepRecord};
pub use optimizer::{guided_update, OptimizerState};
