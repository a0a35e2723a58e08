//! Synthetic moving-square clips scored by a backend whose per-frame
//! scores flicker, with exact ground-truth trajectories for measuring
//! temporal stability.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use ndarray::Array3;
use smite_core::synthetic::MovingSquare;
use smite_core::{GuidanceConfig, LabelVideo, TrackPoint, TrackTable, Trajectory, VideoClip};
use smite_diffusion::{ScoreBackend, ScoreFn};
use smite_guidance::run_inference;
use smite_tracking::{track_video, BlockMatchTracker, QueryPlan};

use crate::ablation::{variant_config, Variant};
use crate::error::Result;
use crate::metrics::miou;

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub frames: usize,
    pub size: usize,
    pub side: usize,
    pub velocity: (i64, i64),
    /// Pixels per score cell.
    pub cell: usize,
    /// Probability that a cell's logit is negated on a given frame.
    pub flicker_rate: f64,
    /// Red-channel distance from the threshold that maps to one logit unit.
    pub logit_scale: f64,
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            size: 64,
            side: 24,
            velocity: (2, 1),
            cell: 8,
            flicker_rate: 0.15,
            logit_scale: 40.0,
            seed: 0,
        }
    }
}

/// Red threshold between the square (red ≥ 150) and the background (20).
const RED_THRESHOLD: f64 = 85.0;

/// Two-channel logits from each cell's mean red value. A cell's foreground
/// logit is negated with probability `rate`, decided by hashing the whole
/// frame with the cell position, so a moving scene flickers from frame to
/// frame while a static one is wrong the same way in every frame.
pub fn flicker_scorer(rate: f64, logit_scale: f64, seed: u64) -> Arc<ScoreFn> {
    Arc::new(move |frame: &Array3<u8>, cell: usize| {
        let (h, w, _) = frame.dim();
        let (ah, aw) = (h / cell, w / cell);
        let mut fh = DefaultHasher::new();
        frame.iter().for_each(|v| v.hash(&mut fh));
        seed.hash(&mut fh);
        let base = fh.finish();
        let mut out = Array3::zeros((2, ah, aw));
        for cy in 0..ah {
            for cx in 0..aw {
                let mut red = 0.0;
                for y in cy * cell..(cy + 1) * cell {
                    for x in cx * cell..(cx + 1) * cell {
                        red += f64::from(frame[[y, x, 0]]);
                    }
                }
                red /= (cell * cell) as f64;
                let mut logit = (red - RED_THRESHOLD) / logit_scale;
                let mut ch = DefaultHasher::new();
                (base, cy, cx).hash(&mut ch);
                let u = (ch.finish() >> 11) as f64 / (1u64 << 53) as f64;
                if u < rate {
                    logit = -logit;
                }
                out[[1, cy, cx]] = logit;
            }
        }
        out
    })
}

/// Exact trajectories of a grid of pixels seeded on frame 0: points on the
/// square move with it, background points stay put and are hidden while
/// the square covers them.
pub fn true_tracks(square: &MovingSquare, spacing: usize) -> Result<TrackTable> {
    let mut trajectories = Vec::new();
    for y in (0..square.height).step_by(spacing) {
        for x in (0..square.width).step_by(spacing) {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let on_square = square.contains(0, px, py);
            let points = (0..square.frames)
                .map(|f| {
                    let (cx, cy) = square.corner(f);
                    let (c0x, c0y) = square.corner(0);
                    let (tx, ty) = if on_square {
                        (px + (cx - c0x) as f64, py + (cy - c0y) as f64)
                    } else {
                        (px, py)
                    };
                    let inside = tx >= 0.0 && ty >= 0.0 && tx < square.width as f64 && ty < square.height as f64;
                    let visible = inside && (on_square || !square.contains(f, tx, ty));
                    TrackPoint {
                        x: tx.clamp(0.0, (square.width - 1) as f64) as f32,
                        y: ty.clamp(0.0, (square.height - 1) as f64) as f32,
                        visible,
                    }
                })
                .collect();
            trajectories.push(Trajectory { query_frame: 0, points });
        }
    }
    Ok(TrackTable::new(square.frames, trajectories)?)
}

/// Fraction of consecutive visible track steps along which the label under
/// the point changes.
pub fn flicker_rate(labels: &LabelVideo, tracks: &TrackTable) -> f64 {
    let (h, w) = labels.frame_size();
    let at = |f: usize, p: &TrackPoint| labels.labels[[f, (p.y as usize).min(h - 1), (p.x as usize).min(w - 1)]];
    let mut steps = 0usize;
    let mut changes = 0usize;
    for t in &tracks.trajectories {
        for f in 0..tracks.frames.saturating_sub(1) {
            let (a, b) = (&t.points[f], &t.points[f + 1]);
            if a.visible && b.visible {
                steps += 1;
                changes += (at(f, a) != at(f + 1, b)) as usize;
            }
        }
    }
    if steps == 0 {
        0.0
    } else {
        changes as f64 / steps as f64
    }
}

/// Outcome of one harness run.
#[derive(Debug, Clone)]
pub struct HarnessRun {
    pub labels: LabelVideo,
    pub miou: f64,
    pub flicker: f64,
}

pub struct Harness {
    pub config: HarnessConfig,
    pub square: MovingSquare,
    pub video: VideoClip,
    pub gt: LabelVideo,
    pub backend: ScoreBackend,
    /// Block-matched tracks on the score grid, fed to guidance.
    pub tracks: TrackTable,
    /// Exact trajectories, used only for measurement.
    pub truth: TrackTable,
}

impl Harness {
    pub fn new(config: HarnessConfig, window_size: usize) -> Result<Self> {
        let square = MovingSquare::new(config.frames, config.size, config.side, config.velocity, config.seed);
        let (video, gt) = square.render()?;
        let backend = ScoreBackend::new(
            "synthetic-flicker",
            1,
            config.cell,
            flicker_scorer(config.flicker_rate, config.logit_scale, config.seed),
        );
        let grid = (config.size / config.cell, config.size / config.cell);
        let tracks = track_video(
            &video,
            &BlockMatchTracker::default(),
            &QueryPlan::new(grid, window_size, 1),
        )?;
        let truth = true_tracks(&square, 2)?;
        Ok(Self {
            config,
            square,
            video,
            gt,
            backend,
            tracks,
            truth,
        })
    }

    pub fn run(&self, variant: Variant, cfg: &GuidanceConfig) -> Result<HarnessRun> {
        let cfg = variant_config(cfg, variant);
        let out = run_inference(
            &self.backend,
            &self.video,
            &self.backend.state(),
            &cfg,
            Some(&self.tracks),
        )?;
        let all: Vec<usize> = (0..self.video.len()).collect();
        Ok(HarnessRun {
            miou: miou(&out.labels, &self.gt, &all)?,
            flicker: flicker_rate(&out.labels, &self.truth),
            labels: out.labels,
        })
    }
}
