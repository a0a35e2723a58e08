//! Shared domain types for few-shot video part segmentation: clips,
//! annotated references, score stacks, label videos, point tracks and the
//! guidance configuration, together with their on-disk formats.

mod binio;
pub mod config;
pub mod error;
pub mod labels;
pub mod pngio;
pub mod reference;
pub mod resize;
pub mod scores;
pub mod synthetic;
pub mod tracks;
pub mod video;

pub use binio::{get_f64, get_u32, put_f64, put_u32};
pub use config::{Category, GuidanceConfig};
pub use error::{CoreError, Result};
pub use labels::LabelVideo;
pub use reference::{load_reference_set, load_reference_set_with_k, ReferenceExample};
pub use scores::{normalize_scores, softmax_channels, softmax_vjp, WasMapStack};
pub use tracks::{TrackPoint, TrackTable, Trajectory};
pub use video::{VideoClip, MIN_FRAME_SIDE};
