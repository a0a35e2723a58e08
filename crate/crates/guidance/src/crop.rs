//! Second pass on a zoomed-in crop around the coarse foreground.

use ndarray::{s, Array3};
use smite_core::resize::{resize_rgb, resize_volume};
use smite_core::{GuidanceConfig, LabelVideo, TrackPoint, TrackTable, Trajectory, VideoClip, WasMapStack};
use smite_diffusion::{DiffusionBackend, SegModelState};

use crate::error::{GuidanceError, Result};
use crate::inference::{run_inference, InferenceOutput};

/// Fraction by which each side length of a foreground box grows.
pub const CROP_DILATION: f64 = 0.2;

/// Half-open pixel box `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl CropBox {
    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn union(&self, other: &CropBox) -> CropBox {
        CropBox {
            y0: self.y0.min(other.y0),
            x0: self.x0.min(other.x0),
            y1: self.y1.max(other.y1),
            x1: self.x1.max(other.x1),
        }
    }

    /// Grows each side length by `round(ratio · len)`, split as evenly as
    /// possible, then clips to the frame.
    pub fn dilated(&self, ratio: f64, frame_size: (usize, usize)) -> CropBox {
        let grow = |lo: usize, hi: usize, limit: usize| {
            let extra = (ratio * (hi - lo) as f64).round() as usize;
            let before = extra / 2;
            (lo.saturating_sub(before), (hi + extra - before).min(limit))
        };
        let (y0, y1) = grow(self.y0, self.y1, frame_size.0);
        let (x0, x1) = grow(self.x0, self.x1, frame_size.1);
        CropBox { y0, x0, y1, x1 }
    }
}

/// Tight box around the non-background pixels of one frame.
pub fn foreground_box(labels: ndarray::ArrayView2<'_, u8>) -> Option<CropBox> {
    let mut found: Option<CropBox> = None;
    for ((y, x), &v) in labels.indexed_iter() {
        if v == 0 {
            continue;
        }
        let b = CropBox {
            y0: y,
            x0: x,
            y1: y + 1,
            x1: x + 1,
        };
        found = Some(found.map_or(b, |f| f.union(&b)));
    }
    found
}

/// Dilated foreground boxes, each unioned over the centered temporal window
/// of `window_size` frames. Frames with no foreground anywhere in their
/// window use the union over the whole clip. `None` if every frame is
/// background.
pub fn crop_boxes(coarse: &LabelVideo, window_size: usize) -> Option<Vec<CropBox>> {
    let size = coarse.frame_size();
    let dilated: Vec<Option<CropBox>> = (0..coarse.frames())
        .map(|f| foreground_box(coarse.frame(f)).map(|b| b.dilated(CROP_DILATION, size)))
        .collect();
    let global = dilated.iter().flatten().copied().reduce(|a, b| a.union(&b))?;
    let half = window_size / 2;
    let n = dilated.len();
    Some(
        (0..n)
            .map(|f| {
                dilated[f.saturating_sub(half)..(f + half + 1).min(n)]
                    .iter()
                    .flatten()
                    .copied()
                    .reduce(|a, b| a.union(&b))
                    .unwrap_or(global)
            })
            .collect(),
    )
}

fn crop_tracks(tracks: &TrackTable, boxes: &[CropBox], frame_size: (usize, usize)) -> Result<TrackTable> {
    let (h, w) = frame_size;
    let trajectories = tracks
        .trajectories
        .iter()
        .map(|t| Trajectory {
            query_frame: t.query_frame,
            points: t
                .points
                .iter()
                .zip(boxes)
                .map(|(p, b)| {
                    let x = (p.x as f64 - b.x0 as f64) * w as f64 / b.width() as f64;
                    let y = (p.y as f64 - b.y0 as f64) * h as f64 / b.height() as f64;
                    let inside = x >= 0.0 && y >= 0.0 && x < w as f64 && y < h as f64;
                    TrackPoint {
                        x: x.clamp(0.0, (w - 1) as f64) as f32,
                        y: y.clamp(0.0, (h - 1) as f64) as f32,
                        visible: p.visible && inside,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(TrackTable::new(tracks.frames, trajectories)?)
}

/// Outcome of [`crop_refine`]; `run` is `None` when the coarse labels had
/// no foreground and were returned as they were.
#[derive(Debug, Clone)]
pub struct Refined {
    pub labels: LabelVideo,
    pub boxes: Option<Vec<CropBox>>,
    pub run: Option<InferenceOutput>,
}

/// Crops every frame to its windowed foreground box, resizes the crops to
/// the original frame size, segments them again and pastes the result
/// back. Pixels outside the crop are background.
pub fn crop_refine(
    backend: &dyn DiffusionBackend,
    video: &VideoClip,
    coarse: &LabelVideo,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    tracks: Option<&TrackTable>,
) -> Result<Refined> {
    if coarse.num_segments != state.num_segments() {
        return Err(GuidanceError::KMismatch {
            state: state.num_segments() as usize,
            input: coarse.num_segments as usize,
        });
    }
    if coarse.frames() != video.len() || coarse.frame_size() != video.frame_size() {
        return Err(GuidanceError::ShapeMismatch(format!(
            "coarse labels {:?} for a {}-frame {:?} clip",
            coarse.labels.dim(),
            video.len(),
            video.frame_size()
        )));
    }
    let Some(boxes) = crop_boxes(coarse, cfg.window_size) else {
        log::warn!("{}; keeping the coarse labels", GuidanceError::EmptyForeground);
        return Ok(Refined {
            labels: coarse.clone(),
            boxes: None,
            run: None,
        });
    };
    let (h, w) = video.frame_size();
    let frames = video
        .frames()
        .iter()
        .zip(&boxes)
        .map(|(f, b)| resize_rgb(&f.slice(s![b.y0..b.y1, b.x0..b.x1, ..]).to_owned(), h, w))
        .collect();
    let cropped = VideoClip::new(frames, video.fps, video.source_path.clone())?;
    let cropped_tracks = tracks.map(|t| crop_tracks(t, &boxes, (h, w))).transpose()?;
    let mut run = run_inference(backend, &cropped, state, cfg, cropped_tracks.as_ref())?;

    let mut labels = Array3::<u8>::zeros((video.len(), h, w));
    for (f, b) in boxes.iter().enumerate() {
        let frame_scores = run.scores.scores.slice(s![f..f + 1, .., .., ..]).to_owned();
        let up = WasMapStack::new(resize_volume(&frame_scores, b.height(), b.width())).argmax();
        labels
            .slice_mut(s![f, b.y0..b.y1, b.x0..b.x1])
            .assign(&up.slice(s![0, .., ..]));
    }
    run.manifest.crops = Some(boxes.iter().map(|b| (b.y0, b.x0, b.y1, b.x1)).collect());
    Ok(Refined {
        labels: LabelVideo::new(labels, coarse.num_segments)?,
        boxes: Some(boxes),
        run: Some(run),
    })
}
