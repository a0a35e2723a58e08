//! Clips longer than the attention can hold, processed in overlapping
//! slices whose leading frames replay the previous slice's state.

use ndarray::{s, Array3, Array4};
use smite_core::{GuidanceConfig, LabelVideo, TrackTable, Trajectory, VideoClip, WasMapStack};
use smite_diffusion::{DiffusionBackend, SegModelState};

use crate::error::{GuidanceError, Result};
use crate::inference::{run_clip, run_inference, Carry, InferenceOutput};
use crate::manifest::SliceRecord;

/// Slices of at most `2·t` frames. Every slice after the first opens with
/// the last `t + 1` frames of its predecessor, so each one adds `t − 1` new
/// frames; the final slice may be shorter.
pub fn slice_plan(frames: usize, t: usize) -> Result<Vec<SliceRecord>> {
    if t < 2 {
        return Err(GuidanceError::InvalidSlice(format!(
            "slice half-length must be >= 2, got {t}"
        )));
    }
    if frames <= 2 * t {
        return Ok(vec![SliceRecord {
            start: 0,
            end: frames,
            carried: 0,
        }]);
    }
    let mut plan = vec![SliceRecord {
        start: 0,
        end: 2 * t,
        carried: 0,
    }];
    while let Some(&last) = plan.last() {
        if last.end >= frames {
            break;
        }
        let start = last.end - (t + 1);
        plan.push(SliceRecord {
            start,
            end: (start + 2 * t).min(frames),
            carried: t + 1,
        });
    }
    Ok(plan)
}

/// Trajectories seeded inside `range`, cut to it and re-indexed.
pub fn slice_tracks(tracks: &TrackTable, range: std::ops::Range<usize>) -> Result<TrackTable> {
    let trajectories = tracks
        .trajectories
        .iter()
        .filter(|t| range.contains(&t.query_frame))
        .map(|t| Trajectory {
            query_frame: t.query_frame - range.start,
            points: t.points[range.clone()].to_vec(),
        })
        .collect();
    Ok(TrackTable::new(range.len(), trajectories)?)
}

/// Runs [`run_inference`] slice by slice. Carried frames keep the labels
/// and scores of their first computation.
pub fn run_long_video(
    backend: &dyn DiffusionBackend,
    video: &VideoClip,
    state: &SegModelState,
    cfg: &GuidanceConfig,
    tracks: Option<&TrackTable>,
    t: usize,
) -> Result<InferenceOutput> {
    let plan = slice_plan(video.len(), t)?;
    if plan.len() == 1 {
        return run_inference(backend, video, state, cfg, tracks);
    }
    let (h, w) = video.frame_size();
    let mut labels = Array3::<u8>::zeros((video.len(), h, w));
    let mut scores: Option<Array4<f64>> = None;
    let mut manifest = None;
    let mut carry: Option<Carry> = None;
    for slice in &plan {
        let range = slice.start..slice.end;
        let clip = video.slice(range.clone())?;
        let sub_tracks = tracks.map(|tt| slice_tracks(tt, range.clone())).transpose()?;
        log::info!("slice {}..{} ({} carried)", slice.start, slice.end, slice.carried);
        let (out, next) = run_clip(backend, &clip, state, cfg, sub_tracks.as_ref(), carry.as_ref(), t + 1)?;
        let fresh = slice.start + slice.carried..slice.end;
        labels
            .slice_mut(s![fresh.clone(), .., ..])
            .assign(&out.labels.labels.slice(s![slice.carried.., .., ..]));
        let all = scores.get_or_insert_with(|| {
            let (_, c, sh, sw) = out.scores.scores.dim();
            Array4::zeros((video.len(), c, sh, sw))
        });
        all.slice_mut(s![fresh, .., .., ..])
            .assign(&out.scores.scores.slice(s![slice.carried.., .., .., ..]));
        let m = manifest.get_or_insert_with(|| {
            let mut m = out.manifest.clone();
            m.steps.clear();
            m.frames = video.len();
            m
        });
        m.steps.extend(out.manifest.steps);
        m.slices.push(*slice);
        carry = Some(next);
    }
    let manifest = manifest.expect("plan has at least two slices");
    Ok(InferenceOutput {
        labels: LabelVideo::new(labels, manifest.num_segments as u8)?,
        scores: WasMapStack::new(scores.expect("plan has at least two slices")),
        manifest,
    })
}
