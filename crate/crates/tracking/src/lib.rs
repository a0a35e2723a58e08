//! Point tracking for temporal voting: a tracker interface with an
//! out-of-process adapter and an in-tree patch matcher, query seeding on the
//! attention grid, and projection of pixel trajectories to attention cells.

mod block_match;
mod error;
mod external;
mod project;
mod tracker;

pub use block_match::BlockMatchTracker;
pub use error::{Result, TrackingError};
pub use external::{ExternalTracker, TRACKER_ENV};
pub use project::{project_coord, project_tracks, Cell, ProjectedTracks, ProjectedTrajectory, WindowLayout};
pub use tracker::{seed_queries, track_video, PointTracker, Query, QueryPlan};
