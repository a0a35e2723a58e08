//! Evaluation: region and boundary metrics, sparse annotation loading, CSV
//! reports, component ablations, and a synthetic harness with flickering
//! per-frame scores and exact trajectories.

mod ablation;
mod annotations;
mod error;
pub mod harness;
pub mod metrics;
mod report;

pub use ablation::{run_ablation, variant_config, variant_model, variant_state, AblationInputs, Variant};
pub use annotations::{load_annotations, Annotations};
pub use error::{EvalError, Result};
pub use metrics::{contour_f, miou, DEFAULT_TOLERANCE};
pub use report::{category_means, evaluate, evaluate_dirs, write_report, EvalRecord, SegmentScore};
