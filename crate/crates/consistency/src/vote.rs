//! Track-guided temporal voting over score stacks.

use ndarray::{s, Array1, Array3};
use smite_core::scores::argmax_lowest;
use smite_core::WasMapStack;
use smite_tracking::ProjectedTracks;

use crate::error::{ConsistencyError, Result};
use crate::window::VotingWindow;

/// Voted scores together with the cells that received a vote.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedScores {
    pub scores: WasMapStack,
    /// `(frames, h, w)`; true where the stack was overwritten by a vote.
    pub updated: Array3<bool>,
}

impl TrackedScores {
    pub fn updated_count(&self) -> usize {
        self.updated.iter().filter(|&&u| u).count()
    }
}

fn check_resolution(scores: &WasMapStack, tracks: &ProjectedTracks) -> Result<()> {
    if scores.resolution() != tracks.attn_size || scores.frames() != tracks.frames {
        return Err(ConsistencyError::ResolutionMismatch {
            scores: scores.resolution(),
            tracks: tracks.attn_size,
        });
    }
    Ok(())
}

/// Votes of every trajectory seeded at `window.center`, accumulated per
/// center-frame cell as `(sum of voted vectors, count)`.
fn accumulate(
    scores: &WasMapStack,
    tracks: &ProjectedTracks,
    window: &VotingWindow,
    sums: &mut ndarray::Array4<f64>,
    counts: &mut Array3<u32>,
) {
    let channels = scores.channels();
    for traj in tracks.trajectories.iter().filter(|t| t.query_frame == window.center) {
        let visible: Vec<usize> = window.frames().filter(|&l| traj.visible[l]).collect();
        if visible.is_empty() {
            continue;
        }
        let labels: Vec<usize> = visible
            .iter()
            .map(|&l| {
                let c = traj.cells[l];
                argmax_lowest(scores.scores.slice(s![l, .., c.y, c.x]).iter().copied())
            })
            .collect();
        let mut tally = vec![0usize; channels];
        for &lab in &labels {
            tally[lab] += 1;
        }
        // Most frequent label; the lowest index wins ties.
        let winner = argmax_lowest(tally.iter().map(|&n| n as f64));
        let mut total = Array1::<f64>::zeros(channels);
        let mut count = 0u32;
        for (&l, &lab) in visible.iter().zip(&labels) {
            if lab == winner {
                let c = traj.cells[l];
                total += &scores.scores.slice(s![l, .., c.y, c.x]);
                count += 1;
            }
        }
        let avg = total / count as f64;
        let center = traj.cells[window.center];
        let mut slot = sums.slice_mut(s![window.center, .., center.y, center.x]);
        slot += &avg;
        counts[[window.center, center.y, center.x]] += 1;
    }
}

fn finish(scores: &WasMapStack, sums: ndarray::Array4<f64>, counts: Array3<u32>) -> TrackedScores {
    let mut out = scores.scores.clone();
    let (m, _, h, w) = out.dim();
    for f in 0..m {
        for y in 0..h {
            for x in 0..w {
                let n = counts[[f, y, x]];
                if n > 0 {
                    let v = sums.slice(s![f, .., y, x]).mapv(|v| v / n as f64);
                    out.slice_mut(s![f, .., y, x]).assign(&v);
                }
            }
        }
    }
    TrackedScores {
        scores: WasMapStack::new(out),
        updated: counts.mapv(|n| n > 0),
    }
}

/// Votes for the center-frame cells of one window.
///
/// For each trajectory seeded at the window center, only frames where the
/// point is visible take part. The most frequent argmax label `F` over those
/// frames is found, and the center cell receives the mean score vector of
/// the frames whose argmax equals `F`. Cells reached by several trajectories
/// take the mean of their votes; all other cells are copied unchanged.
pub fn temporal_vote(scores: &WasMapStack, tracks: &ProjectedTracks, window: &VotingWindow) -> Result<TrackedScores> {
    check_resolution(scores, tracks)?;
    let (m, c, h, w) = scores.scores.dim();
    let mut sums = ndarray::Array4::<f64>::zeros((m, c, h, w));
    let mut counts = Array3::<u32>::zeros((m, h, w));
    accumulate(scores, tracks, window, &mut sums, &mut counts);
    Ok(finish(scores, sums, counts))
}

/// Slides windows of `window_size` over the clip with centers every
/// `stride` frames. Every window reads the original stack, so the result
/// does not depend on window order.
pub fn vote_all(
    scores: &WasMapStack,
    tracks: &ProjectedTracks,
    window_size: usize,
    stride: usize,
) -> Result<TrackedScores> {
    check_resolution(scores, tracks)?;
    let (m, c, h, w) = scores.scores.dim();
    let mut sums = ndarray::Array4::<f64>::zeros((m, c, h, w));
    let mut counts = Array3::<u32>::zeros((m, h, w));
    for center in (0..m).step_by(stride.max(1)) {
        let window = VotingWindow::new(center, window_size, m);
        accumulate(scores, tracks, &window, &mut sums, &mut counts);
    }
    Ok(finish(scores, sums, counts))
}
