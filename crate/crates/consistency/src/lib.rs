//! Temporal consistency for score stacks: track-guided voting, an
//! orthonormal 3D DCT with low-pass masks, and the two guidance energies.

mod dct;
mod energy;
mod error;
mod vote;
mod window;

pub use dct::{dct3, dct_matrix, idct3, make_lowpass, SpectralFilter};
pub use energy::{energy_reg, energy_reg_grad, energy_tracking, energy_tracking_grad, EnergyGrad, TargetMode};
pub use error::{ConsistencyError, Result};
pub use vote::{temporal_vote, vote_all, TrackedScores};
pub use window::VotingWindow;
