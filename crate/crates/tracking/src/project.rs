use smite_core::TrackTable;

use crate::error::{Result, TrackingError};

/// Integer attention-map cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTrajectory {
    pub query_frame: usize,
    pub cells: Vec<Cell>,
    pub visible: Vec<bool>,
}

/// Window geometry used when the queries were seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowLayout {
    pub window_size: usize,
    pub stride: usize,
}

/// Trajectories in attention-map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedTracks {
    pub frames: usize,
    /// `(h, w)` of the attention grid.
    pub attn_size: (usize, usize),
    pub layout: WindowLayout,
    pub trajectories: Vec<ProjectedTrajectory>,
}

/// Maps a pixel coordinate on an axis of length `pixels` to a cell on an
/// axis of length `cells`: `⌊v · cells / pixels⌋`, clamped into range.
pub fn project_coord(v: f64, pixels: usize, cells: usize) -> usize {
    let c = (v * cells as f64 / pixels as f64).floor();
    if c <= 0.0 {
        0
    } else {
        (c as usize).min(cells - 1)
    }
}

/// Linearly rescales pixel trajectories onto the attention grid.
pub fn project_tracks(
    tracks: &TrackTable,
    frame_size: (usize, usize),
    attn_size: (usize, usize),
    layout: WindowLayout,
) -> Result<ProjectedTracks> {
    let (fh, fw) = frame_size;
    let (ah, aw) = attn_size;
    if ah > fh || aw > fw || ah == 0 || aw == 0 {
        return Err(TrackingError::AttentionLargerThanFrame {
            attn: attn_size,
            frame: frame_size,
        });
    }
    let trajectories = tracks
        .trajectories
        .iter()
        .map(|t| ProjectedTrajectory {
            query_frame: t.query_frame,
            cells: t
                .points
                .iter()
                .map(|p| Cell {
                    x: project_coord(p.x as f64, fw, aw),
                    y: project_coord(p.y as f64, fh, ah),
                })
                .collect(),
            visible: t.points.iter().map(|p| p.visible).collect(),
        })
        .collect();
    Ok(ProjectedTracks {
        frames: tracks.frames,
        attn_size,
        layout,
        trajectories,
    })
}
