//! Sparse ground-truth masks named by frame index.

use std::path::Path;

use ndarray::{s, Array3};
use smite_core::pngio::read_index_mask;
use smite_core::LabelVideo;

use crate::error::{EvalError, Result};

/// Ground truth on the annotated frames; all other frames are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    pub gt: LabelVideo,
    /// Ascending frame indices that carry a mask.
    pub annotated: Vec<usize>,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> EvalError {
    EvalError::CorruptMask {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Loads `<index>.png` masks from `dir` (any zero padding, any stride).
/// With `num_segments` given, labels above it are rejected; otherwise K is
/// the largest label found. `frames` extends the clip past the last mask.
pub fn load_annotations(dir: &Path, num_segments: Option<u8>, frames: Option<usize>) -> Result<Annotations> {
    let mut masks = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            continue;
        }
        let index: usize = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(&path, "file name is not a frame index"))?;
        let mask = read_index_mask(&path).map_err(|e| corrupt(&path, e.to_string()))?;
        if let Some(k) = num_segments {
            if let Some(&bad) = mask.iter().find(|&&v| v > k) {
                return Err(corrupt(&path, format!("label {bad} exceeds K = {k}")));
            }
        }
        masks.push((index, path, mask));
    }
    masks.sort_by_key(|(i, _, _)| *i);
    if let Some(pair) = masks.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(corrupt(&pair[1].1, format!("second mask for frame {}", pair[1].0)));
    }
    let Some((_, _, first)) = masks.first() else {
        return Ok(Annotations {
            gt: LabelVideo::new(Array3::zeros((frames.unwrap_or(0), 0, 0)), num_segments.unwrap_or(1))?,
            annotated: Vec::new(),
        });
    };
    let (h, w) = first.dim();
    let last = masks.last().map_or(0, |(i, _, _)| *i);
    let total = frames.unwrap_or(0).max(last + 1);
    let mut labels = Array3::<u8>::zeros((total, h, w));
    for (i, path, m) in &masks {
        if m.dim() != (h, w) {
            return Err(corrupt(path, format!("size {:?}, expected {:?}", m.dim(), (h, w))));
        }
        labels.slice_mut(s![*i, .., ..]).assign(m);
    }
    let k = num_segments.unwrap_or_else(|| labels.iter().copied().max().unwrap_or(0).max(1));
    Ok(Annotations {
        gt: LabelVideo::new(labels, k)?,
        annotated: masks.iter().map(|(i, _, _)| *i).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use smite_core::pngio::write_index_mask;

    #[test]
    fn every_fifth_frame() {
        let dir = tempfile::tempdir().unwrap();
        for i in [10, 0, 5] {
            let m = Array2::from_elem((4, 4), (i / 5) as u8);
            write_index_mask(&dir.path().join(format!("{i:05}.png")), &m).unwrap();
        }
        let a = load_annotations(dir.path(), None, Some(12)).unwrap();
        assert_eq!(a.annotated, vec![0, 5, 10]);
        assert_eq!(a.gt.frames(), 12);
        assert_eq!(a.gt.num_segments, 2);
        assert_eq!(a.gt.labels[[10, 0, 0]], 2);
    }

    #[test]
    fn empty_directory_has_nothing_annotated() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_annotations(dir.path(), Some(2), None)
            .unwrap()
            .annotated
            .is_empty());
    }

    #[test]
    fn stray_label_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_index_mask(&dir.path().join("3.png"), &Array2::from_elem((2, 2), 4)).unwrap();
        assert!(matches!(
            load_annotations(dir.path(), Some(3), None),
            Err(EvalError::CorruptMask { .. })
        ));
    }

    #[test]
    fn non_index_name_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_index_mask(&dir.path().join("mask.png"), &Array2::zeros((2, 2))).unwrap();
        assert!(matches!(
            load_annotations(dir.path(), None, None),
            Err(EvalError::CorruptMask { .. })
        ));
    }
}
