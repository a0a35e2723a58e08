use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::error::{CoreError, Result};
use crate::pngio;
use crate::video::sorted_pngs;

/// One annotated reference image. `label_map` holds values in `0..=K` with 0
/// the background.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceExample {
    pub stem: String,
    pub image: Array3<u8>,
    pub label_map: Array2<u8>,
    pub num_segments: u8,
}

impl ReferenceExample {
    pub fn new(stem: impl Into<String>, image: Array3<u8>, label_map: Array2<u8>, num_segments: u8) -> Result<Self> {
        let (h, w, c) = image.dim();
        if c != 3 || label_map.dim() != (h, w) {
            return Err(CoreError::ShapeMismatch(format!(
                "image {:?} and mask {:?} disagree",
                image.dim(),
                label_map.dim()
            )));
        }
        let stem = stem.into();
        if let Some(&bad) = label_map.iter().find(|&&v| v > num_segments) {
            return Err(CoreError::LabelMismatch {
                path: PathBuf::from(&stem),
                found: bad,
                k: num_segments,
            });
        }
        if label_map.iter().all(|&v| v == 0) {
            return Err(CoreError::ShapeMismatch(format!(
                "reference `{stem}` has no foreground pixels"
            )));
        }
        Ok(Self {
            stem,
            image,
            label_map,
            num_segments,
        })
    }

    /// Binary mask of segment `i` (`Y^i`).
    pub fn segment_mask(&self, i: u8) -> Array2<bool> {
        self.label_map.mapv(|v| v == i)
    }

    pub fn size(&self) -> (usize, usize) {
        self.label_map.dim()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        pngio::write_rgb(&dir.join(format!("{}.png", self.stem)), &self.image)?;
        pngio::write_index_mask(&dir.join(format!("{}_mask.png", self.stem)), &self.label_map)
    }
}

/// Loads `<stem>.png` / `<stem>_mask.png` pairs, sorted by stem, inferring K
/// as the largest label seen.
pub fn load_reference_set(dir: &Path) -> Result<Vec<ReferenceExample>> {
    load_reference_set_with_k(dir, None)
}

/// Like [`load_reference_set`], but validates every mask against a declared K.
pub fn load_reference_set_with_k(dir: &Path, declared_k: Option<u8>) -> Result<Vec<ReferenceExample>> {
    let mut pairs = Vec::new();
    for path in sorted_pngs(dir)? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        if stem.ends_with("_mask") {
            continue;
        }
        let mask_path = dir.join(format!("{stem}_mask.png"));
        if !mask_path.exists() {
            return Err(CoreError::MissingMask(path));
        }
        let image = pngio::read_rgb(&path)?;
        let mask = pngio::read_index_mask(&mask_path)?;
        if mask.dim() != (image.dim().0, image.dim().1) {
            return Err(CoreError::ShapeMismatch(format!(
                "`{}` is {:?} but its mask is {:?}",
                path.display(),
                image.dim(),
                mask.dim()
            )));
        }
        pairs.push((stem, image, mask, mask_path));
    }
    let k = match declared_k {
        Some(k) => {
            for (_, _, mask, mask_path) in &pairs {
                if let Some(&bad) = mask.iter().find(|&&v| v > k) {
                    return Err(CoreError::LabelMismatch {
                        path: mask_path.clone(),
                        found: bad,
                        k,
                    });
                }
            }
            k
        }
        None => pairs
            .iter()
            .flat_map(|(_, _, m, _)| m.iter().copied())
            .max()
            .unwrap_or(0),
    };
    pairs
        .into_iter()
        .map(|(stem, image, mask, _)| ReferenceExample::new(stem, image, mask, k))
        .collect()
}
