//! Point trajectories and their binary file layout.
//!
//! Layout (little endian): `u32 N, u32 M, u32 version` followed by `N`
//! records of `i32 query_frame` and `M × (f32 x, f32 y, u8 visible)`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binio::*;
use crate::error::{CoreError, Result};

pub const TRACK_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f32,
    pub y: f32,
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub query_frame: usize,
    /// Exactly one entry per video frame.
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackTable {
    pub frames: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrackTable {
    pub fn new(frames: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        for (i, t) in trajectories.iter().enumerate() {
            if t.points.len() != frames {
                return Err(CoreError::ShapeMismatch(format!(
                    "trajectory {i} has {} entries, expected {frames}",
                    t.points.len()
                )));
            }
            if t.query_frame >= frames {
                return Err(CoreError::ShapeMismatch(format!(
                    "trajectory {i} seeded at frame {} of {frames}",
                    t.query_frame
                )));
            }
        }
        Ok(Self { frames, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Checks that visible points lie inside a `width × height` frame.
    pub fn validate_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (i, t) in self.trajectories.iter().enumerate() {
            for (f, p) in t.points.iter().enumerate() {
                let inside = p.x >= 0.0 && p.y >= 0.0 && (p.x as f64) < width as f64 && (p.y as f64) < height as f64;
                if p.visible && !inside {
                    return Err(CoreError::ShapeMismatch(format!(
                        "trajectory {i} frame {f} at ({}, {}) outside {width}x{height}",
                        p.x, p.y
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same trajectories with the frame axis reversed.
    pub fn reversed(&self) -> Self {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| Trajectory {
                query_frame: self.frames - 1 - t.query_frame,
                points: t.points.iter().rev().copied().collect(),
            })
            .collect();
        Self {
            frames: self.frames,
            trajectories,
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        put_u32(w, self.trajectories.len() as u32)?;
        put_u32(w, self.frames as u32)?;
        put_u32(w, TRACK_FILE_VERSION)?;
        for t in &self.trajectories {
            put_i32(w, t.query_frame as i32)?;
            for p in &t.points {
                put_f32(w, p.x)?;
                put_f32(w, p.y)?;
                w.write_all(&[p.visible as u8])?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read, origin: &Path) -> Result<Self> {
        let n = get_u32(r)? as usize;
        let m = get_u32(r)? as usize;
        let version = get_u32(r)?;
        if version != TRACK_FILE_VERSION {
            return Err(CoreError::format(origin, format!("unsupported version {version}")));
        }
        let mut trajectories = Vec::with_capacity(n);
        for _ in 0..n {
            let q = get_i32(r)?;
            if q < 0 {
                return Err(CoreError::format(origin, "negative query frame"));
            }
            let mut points = Vec::with_capacity(m);
            for _ in 0..m {
                let x = get_f32(r)?;
                let y = get_f32(r)?;
                let visible = match get_u8(r)? {
                    0 => false,
                    1 => true,
                    other => return Err(CoreError::format(origin, format!("visibility byte {other}"))),
                };
                points.push(TrackPoint { x, y, visible });
            }
            trajectories.push(Trajectory {
                query_frame: q as usize,
                points,
            });
        }
        Self::new(m, trajectories).map_err(|e| CoreError::format(origin, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r, path)
    }
}
