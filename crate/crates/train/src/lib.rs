//! Few-shot training of segment text embeddings and cross-attention
//! key/value projections from a handful of annotated reference images.

mod adam;
pub mod config;
pub mod error;
pub mod loss;
pub mod trainer;

pub use config::TrainConfig;
pub use error::{Result, TrainError};
pub use loss::{loss_ce, loss_ldm, loss_mse};
pub use trainer::{evaluate, train, write_loss_csv, LossParts, LossRecord, TrainOutcome};
