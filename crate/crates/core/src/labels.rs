use std::path::Path;

use ndarray::{s, Array3};

use crate::error::{CoreError, Result};
use crate::pngio;
use crate::video::sorted_pngs;

/// Hard segmentation of a clip, `(frames, H, W)` with values in `0..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVideo {
    pub labels: Array3<u8>,
    pub num_segments: u8,
}

impl LabelVideo {
    pub fn new(labels: Array3<u8>, num_segments: u8) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&v| v > num_segments) {
            return Err(CoreError::ShapeMismatch(format!(
                "label {bad} exceeds K = {num_segments}"
            )));
        }
        Ok(Self { labels, num_segments })
    }

    pub fn frames(&self) -> usize {
        self.labels.dim().0
    }

    pub fn frame_size(&self) -> (usize, usize) {
        let (_, h, w) = self.labels.dim();
        (h, w)
    }

    pub fn frame(&self, i: usize) -> ndarray::ArrayView2<'_, u8> {
        self.labels.slice(s![i, .., ..])
    }

    /// Writes one indexed-palette PNG per frame (`00000.png`, ...).
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for i in 0..self.frames() {
            pngio::write_index_mask(&dir.join(format!("{i:05}.png")), &self.frame(i).to_owned())?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path, num_segments: u8) -> Result<Self> {
        let paths = sorted_pngs(dir)?;
        if paths.is_empty() {
            return Err(CoreError::EmptyVideo(dir.to_path_buf()));
        }
        let masks = paths
            .iter()
            .map(|p| pngio::read_index_mask(p))
            .collect::<Result<Vec<_>>>()?;
        let (h, w) = masks[0].dim();
        let mut labels = Array3::<u8>::zeros((masks.len(), h, w));
        for (i, m) in masks.iter().enumerate() {
            if m.dim() != (h, w) {
                return Err(CoreError::ShapeMismatch(format!("frame {i} is {:?}", m.dim())));
            }
            labels.slice_mut(s![i, .., ..]).assign(m);
        }
        Self::new(labels, num_segments)
    }
}
