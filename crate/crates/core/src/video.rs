use std::path::{Path, PathBuf};

use ndarray::Array3;

use crate::error::{CoreError, Result};
use crate::pngio;

/// Smallest frame side the diffusion backend accepts.
pub const MIN_FRAME_SIDE: usize = 64;

/// A clip of RGB frames, each stored `(H, W, 3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    frames: Vec<Array3<u8>>,
    pub fps: f64,
    pub source_path: String,
}

impl VideoClip {
    pub fn new(frames: Vec<Array3<u8>>, fps: f64, source_path: impl Into<String>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(CoreError::ShapeMismatch("video has no frames".into()));
        };
        let (h, w, c) = first.dim();
        if c != 3 {
            return Err(CoreError::ShapeMismatch(format!(
                "frames must be RGB, got {c} channels"
            )));
        }
        if h < MIN_FRAME_SIDE || w < MIN_FRAME_SIDE {
            return Err(CoreError::ShapeMismatch(format!(
                "frames are {h}x{w}; both sides must be at least {MIN_FRAME_SIDE}"
            )));
        }
        if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| f.dim() != (h, w, 3)) {
            return Err(CoreError::ShapeMismatch(format!(
                "frame {i} is {:?}, expected {:?}",
                f.dim(),
                (h, w, 3)
            )));
        }
        Ok(Self {
            frames,
            fps,
            source_path: source_path.into(),
        })
    }

    pub fn frames(&self) -> &[Array3<u8>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(height, width)` shared by all frames.
    pub fn frame_size(&self) -> (usize, usize) {
        let (h, w, _) = self.frames[0].dim();
        (h, w)
    }

    /// Frames `range` as a new clip with the same metadata.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.frames[range].to_vec(), self.fps, self.source_path.clone())
    }

    pub fn reversed(&self) -> Self {
        let mut frames = self.frames.clone();
        frames.reverse();
        Self {
            frames,
            fps: self.fps,
            source_path: self.source_path.clone(),
        }
    }

    /// Loads every `*.png` in `dir`, ordered by file name. An optional
    /// `fps.txt` holds the frame rate.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let paths = sorted_pngs(dir)?;
        if paths.is_empty() {
            return Err(CoreError::EmptyVideo(dir.to_path_buf()));
        }
        let frames = paths.iter().map(|p| pngio::read_rgb(p)).collect::<Result<Vec<_>>>()?;
        let fps_path = dir.join("fps.txt");
        let fps = if fps_path.exists() {
            let text = std::fs::read_to_string(&fps_path)?;
            text.trim()
                .parse()
                .map_err(|_| CoreError::format(&fps_path, "not a number"))?
        } else {
            0.0
        };
        Self::new(frames, fps, dir.display().to_string())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, frame) in self.frames.iter().enumerate() {
            pngio::write_rgb(&dir.join(format!("{i:05}.png")), frame)?;
        }
        std::fs::write(dir.join("fps.txt"), format!("{}\n", self.fps))?;
        Ok(())
    }
}

pub(crate) fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}
