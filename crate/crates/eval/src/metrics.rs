//! Region and boundary accuracy over annotated frames.
//!
//! Conventions: a segment counts on a frame only when it is present in the
//! ground truth there; a segment present in the prediction but not in the
//! ground truth is skipped, and one present in the ground truth but missing
//! from the prediction scores 0. Background is never scored. Per-frame
//! values are segment means; the clip value is the mean over frames that
//! scored at least one segment.

use ndarray::{Array2, ArrayView2};
use smite_core::LabelVideo;

use crate::error::{EvalError, Result};

/// Default boundary match tolerance in pixels.
pub const DEFAULT_TOLERANCE: f64 = 1.5;

fn check(pred: &LabelVideo, gt: &LabelVideo, annotated: &[usize]) -> Result<()> {
    if annotated.is_empty() {
        return Err(EvalError::NoAnnotatedFrames);
    }
    if pred.labels.dim() != gt.labels.dim() {
        return Err(EvalError::ShapeMismatch(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.labels.dim(),
            gt.labels.dim()
        )));
    }
    if let Some(&f) = annotated.iter().find(|&&f| f >= gt.frames()) {
        return Err(EvalError::ShapeMismatch(format!(
            "annotated frame {f} beyond {} frames",
            gt.frames()
        )));
    }
    Ok(())
}

fn segments(gt: &LabelVideo) -> impl Iterator<Item = u8> {
    1..=gt.num_segments
}

/// `|P ∩ G| / |P ∪ G|` for label `k`, or `None` when `k` is absent from
/// the ground-truth frame.
pub fn frame_iou(pred: ArrayView2<'_, u8>, gt: ArrayView2<'_, u8>, k: u8) -> Option<f64> {
    let mut inter = 0usize;
    let mut union = 0usize;
    let mut in_gt = false;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        let (p, g) = (p == k, g == k);
        in_gt |= g;
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    in_gt.then(|| inter as f64 / union as f64)
}

/// Pixels of `mask` with a 4-neighbour outside it. Pixels at the image
/// border are only boundary if an inside neighbour disagrees, so a mask
/// touching the frame edge has no boundary along that edge.
pub fn boundary(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        mask[[y, x]]
            && ((y > 0 && !mask[[y - 1, x]])
                || (y + 1 < h && !mask[[y + 1, x]])
                || (x > 0 && !mask[[y, x - 1]])
                || (x + 1 < w && !mask[[y, x + 1]]))
    })
}

/// Fraction of `from` pixels within Euclidean distance `tol` of a `to`
/// pixel, or `None` if `from` is empty.
fn matched_fraction(from: &Array2<bool>, to: &Array2<bool>, tol: f64) -> Option<f64> {
    let (h, w) = from.dim();
    let r = tol.floor() as isize;
    let tol2 = tol * tol;
    let mut total = 0usize;
    let mut hit = 0usize;
    for ((y, x), &b) in from.indexed_iter() {
        if !b {
            continue;
        }
        total += 1;
        let found = (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (yy, xx) = (y as isize + dy, x as isize + dx);
                yy >= 0
                    && xx >= 0
                    && (yy as usize) < h
                    && (xx as usize) < w
                    && ((dy * dy + dx * dx) as f64) <= tol2
                    && to[[yy as usize, xx as usize]]
            })
        });
        hit += found as usize;
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Boundary F-measure for label `k` on one frame, or `None` when `k` is
/// absent from the ground truth. Empty boundaries on both sides (a mask
/// filling the frame) count as a perfect match; on one side only as 0.
pub fn frame_contour_f(pred: ArrayView2<'_, u8>, gt: ArrayView2<'_, u8>, k: u8, tolerance: f64) -> Option<f64> {
    let gmask = gt.mapv(|v| v == k);
    if !gmask.iter().any(|&b| b) {
        return None;
    }
    let pb = boundary(&pred.mapv(|v| v == k));
    let gb = boundary(&gmask);
    Some(
        match (
            matched_fraction(&pb, &gb, tolerance),
            matched_fraction(&gb, &pb, tolerance),
        ) {
            (None, None) => 1.0,
            (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
            _ => 0.0,
        },
    )
}

fn frame_mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn clip_mean(per_frame: impl Iterator<Item = Option<f64>>) -> Result<f64> {
    frame_mean(per_frame).ok_or(EvalError::EmptyGroundTruth)
}

/// Mean IoU over ground-truth segments, then over annotated frames.
pub fn miou(pred: &LabelVideo, gt: &LabelVideo, annotated: &[usize]) -> Result<f64> {
    check(pred, gt, annotated)?;
    clip_mean(
        annotated
            .iter()
            .map(|&f| frame_mean(segments(gt).map(|k| frame_iou(pred.frame(f), gt.frame(f), k)))),
    )
}

/// Mean boundary F-measure over ground-truth segments, then over frames.
pub fn contour_f(pred: &LabelVideo, gt: &LabelVideo, annotated: &[usize], tolerance: f64) -> Result<f64> {
    check(pred, gt, annotated)?;
    clip_mean(
        annotated
            .iter()
            .map(|&f| frame_mean(segments(gt).map(|k| frame_contour_f(pred.frame(f), gt.frame(f), k, tolerance)))),
    )
}

/// Per-segment IoU and F averaged over the annotated frames where the
/// segment appears in the ground truth; `None` if it never does.
pub fn per_segment(
    pred: &LabelVideo,
    gt: &LabelVideo,
    annotated: &[usize],
    tolerance: f64,
) -> Result<Vec<(u8, Option<f64>, Option<f64>)>> {
    check(pred, gt, annotated)?;
    Ok(segments(gt)
        .map(|k| {
            let iou = frame_mean(annotated.iter().map(|&f| frame_iou(pred.frame(f), gt.frame(f), k)));
            let f = frame_mean(
                annotated
                    .iter()
                    .map(|&f| frame_contour_f(pred.frame(f), gt.frame(f), k, tolerance)),
            );
            (k, iou, f)
        })
        .collect())
}
