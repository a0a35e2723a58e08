//! Patch-matching point tracker for synthetic and test clips.
//!
//! Each query keeps its seed-frame patch as the template and searches a small
//! neighbourhood around its previous position, forwards and backwards from
//! the seed frame, with parabolic sub-pixel refinement.

use ndarray::{Array2, Axis};
use smite_core::{TrackPoint, TrackTable, Trajectory, VideoClip};

use crate::error::Result;
use crate::tracker::{PointTracker, Query};

#[derive(Debug, Clone)]
pub struct BlockMatchTracker {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Mean absolute intensity difference (0–255 scale) above which a match
    /// counts as occluded.
    pub max_mean_abs_diff: f32,
}

impl Default for BlockMatchTracker {
    fn default() -> Self {
        Self {
            patch_radius: 3,
            search_radius: 4,
            max_mean_abs_diff: 20.0,
        }
    }
}

fn to_gray(frame: &ndarray::Array3<u8>) -> Array2<f32> {
    frame.map_axis(Axis(2), |px| {
        0.299 * px[0] as f32 + 0.587 * px[1] as f32 + 0.114 * px[2] as f32
    })
}

fn sample(img: &Array2<f32>, x: f32, y: f32) -> f32 {
    let (h, w) = img.dim();
    let x = x.clamp(0.0, (w - 1) as f32);
    let y = y.clamp(0.0, (h - 1) as f32);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f32;
    let fy = y - y0 as f32;
    let top = img[[y0, x0]] * (1.0 - fx) + img[[y0, x1]] * fx;
    let bottom = img[[y1, x0]] * (1.0 - fx) + img[[y1, x1]] * fx;
    top * (1.0 - fy) + bottom * fy
}

impl BlockMatchTracker {
    fn patch(&self, img: &Array2<f32>, x: f32, y: f32) -> Vec<f32> {
        let r = self.patch_radius as isize;
        let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dy in -r..=r {
            for dx in -r..=r {
                out.push(sample(img, x + dx as f32, y + dy as f32));
            }
        }
        out
    }

    fn ssd(&self, template: &[f32], img: &Array2<f32>, x: f32, y: f32) -> f32 {
        let r = self.patch_radius as isize;
        let mut i = 0;
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let d = template[i] - sample(img, x + dx as f32, y + dy as f32);
                acc += d * d;
                i += 1;
            }
        }
        acc
    }

    /// Best match of `template` in `img` near `(x, y)`; returns the refined
    /// position and the mean absolute difference there.
    fn search(&self, template: &[f32], img: &Array2<f32>, x: f32, y: f32) -> (f32, f32, f32) {
        let r = self.search_radius as isize;
        let mut offsets: Vec<(isize, isize)> = (-r..=r).flat_map(|dy| (-r..=r).map(move |dx| (dx, dy))).collect();
        offsets.sort_by_key(|&(dx, dy)| (dx.abs() + dy.abs(), dy, dx));
        let mut best = (0isize, 0isize);
        let mut best_cost = f32::INFINITY;
        for &(dx, dy) in &offsets {
            let c = self.ssd(template, img, x + dx as f32, y + dy as f32);
            if c < best_cost {
                best_cost = c;
                best = (dx, dy);
            }
        }
        let (bx, by) = (x + best.0 as f32, y + best.1 as f32);
        let refine = |minus: f32, plus: f32| {
            let denom = minus - 2.0 * best_cost + plus;
            if denom > 1e-6 {
                (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
            } else {
                0.0
            }
        };
        let sx = refine(
            self.ssd(template, img, bx - 1.0, by),
            self.ssd(template, img, bx + 1.0, by),
        );
        let sy = refine(
            self.ssd(template, img, bx, by - 1.0),
            self.ssd(template, img, bx, by + 1.0),
        );
        let (fx, fy) = (bx + sx, by + sy);
        let cost = self.ssd(template, img, fx, fy).min(best_cost);
        let mad = (cost / template.len() as f32).sqrt();
        (fx, fy, mad)
    }

    fn track_one(&self, frames: &[Array2<f32>], q: &Query) -> Trajectory {
        let m = frames.len();
        let (h, w) = frames[0].dim();
        let inside = |x: f32, y: f32| x >= 0.0 && y >= 0.0 && x < w as f32 && y < h as f32;
        let template = self.patch(&frames[q.frame], q.x, q.y);
        let mut points = vec![
            TrackPoint {
                x: q.x,
                y: q.y,
                visible: false,
            };
            m
        ];
        points[q.frame].visible = inside(q.x, q.y);
        let end = q.end.min(m - 1);
        let step = |range: &mut dyn Iterator<Item = usize>, points: &mut Vec<TrackPoint>| {
            let (mut x, mut y) = (q.x, q.y);
            for f in range {
                let (nx, ny, mad) = self.search(&template, &frames[f], x, y);
                let nx = nx.clamp(0.0, w as f32 - 1e-3);
                let ny = ny.clamp(0.0, h as f32 - 1e-3);
                points[f] = TrackPoint {
                    x: nx,
                    y: ny,
                    visible: mad <= self.max_mean_abs_diff && inside(nx, ny),
                };
                x = nx;
                y = ny;
            }
        };
        step(&mut (q.frame + 1..=end), &mut points);
        step(&mut (q.start..q.frame).rev(), &mut points);
        Trajectory {
            query_frame: q.frame,
            points,
        }
    }
}

impl PointTracker for BlockMatchTracker {
    fn name(&self) -> &str {
        "block-match"
    }

    fn track(&self, video: &VideoClip, queries: &[Query]) -> Result<TrackTable> {
        let frames: Vec<Array2<f32>> = video.frames().iter().map(to_gray).collect();
        let trajectories = queries.iter().map(|q| self.track_one(&frames, q)).collect();
        Ok(TrackTable::new(video.len(), trajectories)?)
    }
}
