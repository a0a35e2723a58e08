use smite_core::{TrackTable, VideoClip};

use crate::error::{Result, TrackingError};

/// A point to track, seeded at `frame` and followed over `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub frame: usize,
    pub x: f32,
    pub y: f32,
    pub start: usize,
    pub end: usize,
}

/// Anything that turns queries into full-length trajectories. Frames
/// outside a query's `start..=end` span are reported invisible.
pub trait PointTracker {
    fn name(&self) -> &str;

    fn track(&self, video: &VideoClip, queries: &[Query]) -> Result<TrackTable>;
}

/// Where queries are seeded: a regular grid over the attention cells of
/// every window center frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPlan {
    pub attn_size: (usize, usize),
    pub window_size: usize,
    pub stride: usize,
    /// Queries per cell along each axis.
    pub points_per_cell: usize,
}

impl QueryPlan {
    pub fn new(attn_size: (usize, usize), window_size: usize, stride: usize) -> Self {
        Self {
            attn_size,
            window_size,
            stride,
            points_per_cell: 1,
        }
    }

    pub fn centers(&self, frames: usize) -> impl Iterator<Item = usize> {
        (0..frames).step_by(self.stride.max(1))
    }

    /// Inclusive frame span of the window around `center`, clipped to the clip.
    pub fn span(&self, center: usize, frames: usize) -> (usize, usize) {
        let half = self.window_size / 2;
        (center.saturating_sub(half), (center + half).min(frames - 1))
    }
}

pub fn seed_queries(frame_size: (usize, usize), frames: usize, plan: &QueryPlan) -> Vec<Query> {
    let (fh, fw) = frame_size;
    let (ah, aw) = plan.attn_size;
    let d = plan.points_per_cell.max(1);
    let mut queries = Vec::new();
    for center in plan.centers(frames) {
        let (start, end) = plan.span(center, frames);
        for cy in 0..ah {
            for cx in 0..aw {
                for sy in 0..d {
                    for sx in 0..d {
                        let ux = (cx as f64 + (sx as f64 + 0.5) / d as f64) * fw as f64 / aw as f64;
                        let uy = (cy as f64 + (sy as f64 + 0.5) / d as f64) * fh as f64 / ah as f64;
                        queries.push(Query {
                            frame: center,
                            x: ux as f32,
                            y: uy as f32,
                            start,
                            end,
                        });
                    }
                }
            }
        }
    }
    queries
}

/// Seeds one query grid per window center and tracks every query in both
/// temporal directions from its seed frame.
pub fn track_video(video: &VideoClip, tracker: &dyn PointTracker, plan: &QueryPlan) -> Result<TrackTable> {
    if video.len() < 2 {
        return Err(TrackingError::VideoTooShort(video.len()));
    }
    let (fh, fw) = video.frame_size();
    let (ah, aw) = plan.attn_size;
    if ah > fh || aw > fw {
        return Err(TrackingError::AttentionLargerThanFrame {
            attn: plan.attn_size,
            frame: (fh, fw),
        });
    }
    let queries = seed_queries((fh, fw), video.len(), plan);
    log::debug!("tracking {} queries with {}", queries.len(), tracker.name());
    let table = tracker.track(video, &queries)?;
    if table.frames != video.len() || table.len() != queries.len() {
        return Err(TrackingError::TrackerUnavailable(format!(
            "{} returned {} tracks over {} frames, expected {} over {}",
            tracker.name(),
            table.len(),
            table.frames,
            queries.len(),
            video.len()
        )));
    }
    table.validate_bounds(fw, fh)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_query_per_cell_per_center() {
        let plan = QueryPlan::new((4, 4), 7, 3);
        let q = seed_queries((64, 64), 10, &plan);
        // Centers 0, 3, 6, 9.
        assert_eq!(q.len(), 4 * 16);
        assert_eq!((q[0].x, q[0].y), (8.0, 8.0));
        assert_eq!((q[16].frame, q[16].start, q[16].end), (3, 0, 6));
        let last = q.last().unwrap();
        assert_eq!((last.frame, last.start, last.end), (9, 6, 9));
    }

    #[test]
    fn denser_seeding() {
        let plan = QueryPlan {
            points_per_cell: 2,
            ..QueryPlan::new((2, 2), 3, 1)
        };
        let q = seed_queries((64, 64), 2, &plan);
        assert_eq!(q.len(), 2 * 4 * 4);
        assert_eq!((q[0].x, q[0].y), (8.0, 8.0));
        assert_eq!((q[1].x, q[1].y), (24.0, 8.0));
    }
}
