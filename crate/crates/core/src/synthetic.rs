//! Procedural clips with known ground truth: textured squares translating
//! over a static textured background.

use ndarray::{Array3, Array4};

use crate::error::Result;
use crate::labels::LabelVideo;
use crate::video::VideoClip;

fn hash2(x: i64, y: i64, seed: u64) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in [x as u64, y as u64] {
        h ^= v.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = h.rotate_left(31).wrapping_mul(0x94D0_49BB_1331_11EB);
    }
    h ^ (h >> 29)
}

/// Smooth-ish texture value in `0..1` (a 2x2 block-averaged hash).
fn texture(x: i64, y: i64, seed: u64) -> f64 {
    let mut acc = 0.0;
    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        acc += (hash2((x + dx) / 2, (y + dy) / 2, seed) % 1024) as f64 / 1023.0;
    }
    acc / 4.0
}

#[derive(Debug, Clone)]
pub struct MovingSquare {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub side: usize,
    /// Top-left corner at frame 0, in pixels.
    pub origin: (i64, i64),
    /// Displacement per frame, in pixels.
    pub velocity: (i64, i64),
    pub seed: u64,
}

impl MovingSquare {
    pub fn new(frames: usize, size: usize, side: usize, velocity: (i64, i64), seed: u64) -> Self {
        Self {
            frames,
            height: size,
            width: size,
            side,
            origin: (((size - side) / 4) as i64, ((size - side) / 2) as i64),
            velocity,
            seed,
        }
    }

    pub fn corner(&self, frame: usize) -> (i64, i64) {
        (
            self.origin.0 + self.velocity.0 * frame as i64,
            self.origin.1 + self.velocity.1 * frame as i64,
        )
    }

    pub fn contains(&self, frame: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.corner(frame);
        x >= cx as f64 && y >= cy as f64 && x < (cx + self.side as i64) as f64 && y < (cy + self.side as i64) as f64
    }

    pub fn render(&self) -> Result<(VideoClip, LabelVideo)> {
        let mut frames = Vec::with_capacity(self.frames);
        let mut labels = Array3::<u8>::zeros((self.frames, self.height, self.width));
        for f in 0..self.frames {
            let (cx, cy) = self.corner(f);
            let mut img = Array3::<u8>::zeros((self.height, self.width, 3));
            for y in 0..self.height {
                for x in 0..self.width {
                    let (u, v) = (x as i64 - cx, y as i64 - cy);
                    let inside = u >= 0 && v >= 0 && u < self.side as i64 && v < self.side as i64;
                    let rgb = if inside {
                        labels[[f, y, x]] = 1;
                        let t = texture(u, v, self.seed ^ 0xA5A5);
                        [150.0 + 100.0 * t, 40.0 + 120.0 * t, 30.0]
                    } else {
                        let t = texture(x as i64, y as i64, self.seed);
                        [20.0, 60.0 + 100.0 * t, 110.0 + 140.0 * t]
                    };
                    for c in 0..3 {
                        img[[y, x, c]] = rgb[c].round().clamp(0.0, 255.0) as u8;
                    }
                }
            }
            frames.push(img);
        }
        Ok((
            VideoClip::new(frames, 24.0, "synthetic:moving-square")?,
            LabelVideo::new(labels, 1)?,
        ))
    }

    /// Fraction of each `cell × cell` block covered by the square, laid out
    /// `(frames, 2, h, w)` with channel 1 the square and channel 0 its
    /// complement.
    pub fn coverage(&self, attn: (usize, usize)) -> Array4<f64> {
        let (ah, aw) = attn;
        let sy = self.height as f64 / ah as f64;
        let sx = self.width as f64 / aw as f64;
        let mut out = Array4::<f64>::zeros((self.frames, 2, ah, aw));
        for f in 0..self.frames {
            for cy in 0..ah {
                for cx in 0..aw {
                    let mut hits = 0usize;
                    let mut total = 0usize;
                    for py in (cy as f64 * sy) as usize..((cy + 1) as f64 * sy) as usize {
                        for px in (cx as f64 * sx) as usize..((cx + 1) as f64 * sx) as usize {
                            total += 1;
                            hits += self.contains(f, px as f64 + 0.5, py as f64 + 0.5) as usize;
                        }
                    }
                    let frac = hits as f64 / total.max(1) as f64;
                    out[[f, 1, cy, cx]] = frac;
                    out[[f, 0, cy, cx]] = 1.0 - frac;
                }
            }
        }
        out
    }
}

/// A clip whose frames are all identical copies of one textured frame.
pub fn static_clip(frames: usize, size: usize, seed: u64) -> Result<(VideoClip, LabelVideo)> {
    MovingSquare::new(frames, size, size / 3, (0, 0), seed).render()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_moves_by_velocity() {
        let sq = MovingSquare::new(3, 64, 16, (2, 0), 1);
        let (clip, gt) = sq.render().unwrap();
        assert_eq!(clip.len(), 3);
        let count = |f: usize| gt.frame(f).iter().filter(|&&v| v == 1).count();
        assert_eq!(count(0), 256);
        assert_eq!(count(2), 256);
        let (cx0, _) = sq.corner(0);
        let (cx2, _) = sq.corner(2);
        assert_eq!(cx2 - cx0, 4);
    }

    #[test]
    fn coverage_sums_to_one() {
        let sq = MovingSquare::new(2, 64, 18, (1, 1), 3);
        let cov = sq.coverage((16, 16));
        for f in 0..2 {
            for y in 0..16 {
                for x in 0..16 {
                    assert!((cov[[f, 0, y, x]] + cov[[f, 1, y, x]] - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
