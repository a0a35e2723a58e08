use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array3, Array4, Axis, Zip};

use crate::binio::*;
use crate::error::{CoreError, Result};
use crate::resize::resize_volume;

const WAS_MAGIC: &[u8; 4] = b"WAS1";

/// Per-frame, per-segment score volume `(frames, K+1, h, w)`. Channel 0 is
/// the background.
#[derive(Debug, Clone, PartialEq)]
pub struct WasMapStack {
    pub scores: Array4<f64>,
}

impl WasMapStack {
    pub fn new(scores: Array4<f64>) -> Self {
        Self { scores }
    }

    pub fn frames(&self) -> usize {
        self.scores.dim().0
    }

    pub fn channels(&self) -> usize {
        self.scores.dim().1
    }

    pub fn resolution(&self) -> (usize, usize) {
        let (_, _, h, w) = self.scores.dim();
        (h, w)
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().all(|v| v.is_finite())
    }

    /// Per-pixel softmax over the channel axis.
    pub fn normalize(&self) -> Result<Self> {
        normalize_scores(self)
    }

    /// Per-pixel argmax over channels; ties go to the lowest channel.
    pub fn argmax(&self) -> Array3<u8> {
        let (m, _, h, w) = self.scores.dim();
        Array3::from_shape_fn((m, h, w), |(f, y, x)| {
            argmax_lowest(self.scores.slice(ndarray::s![f, .., y, x]).iter().copied()) as u8
        })
    }

    /// Bilinear upsampling of every channel; labels are derived afterwards.
    pub fn resized(&self, h: usize, w: usize) -> Self {
        Self::new(resize_volume(&self.scores, h, w))
    }

    pub fn frame_range(&self, range: std::ops::Range<usize>) -> Self {
        Self::new(self.scores.slice(ndarray::s![range, .., .., ..]).to_owned())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(WAS_MAGIC)?;
        let (a, b, c, d) = self.scores.dim();
        for v in [a, b, c, d] {
            put_u32(&mut w, v as u32)?;
        }
        for &v in self.scores.iter() {
            put_f64(&mut w, v)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != WAS_MAGIC {
            return Err(CoreError::format(path, "bad magic"));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = get_u32(&mut r)? as usize;
        }
        let n = dims.iter().product::<usize>();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(get_f64(&mut r)?);
        }
        let scores = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), data)
            .map_err(|e| CoreError::format(path, e.to_string()))?;
        Ok(Self::new(scores))
    }
}

pub fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Tolerance under which a stack counts as already lying on the simplex.
const SIMPLEX_TOL: f64 = 1e-9;

/// Maps raw scores to per-pixel probabilities with a softmax over the
/// channel axis. A stack that is already normalized (non-negative, channel
/// sums within `1e-9` of one) is returned unchanged, which makes the
/// operation a projection.
pub fn normalize_scores(stack: &WasMapStack) -> Result<WasMapStack> {
    if !stack.is_finite() {
        return Err(CoreError::NonFiniteInput);
    }
    if is_normalized(stack) {
        return Ok(stack.clone());
    }
    Ok(softmax_channels(stack))
}

pub fn is_normalized(stack: &WasMapStack) -> bool {
    stack.scores.iter().all(|&v| v >= 0.0)
        && stack
            .scores
            .sum_axis(Axis(1))
            .iter()
            .all(|s| (s - 1.0).abs() <= SIMPLEX_TOL)
}

/// Unconditional per-pixel softmax over channels.
pub fn softmax_channels(stack: &WasMapStack) -> WasMapStack {
    let mut out = stack.scores.clone();
    for mut frame in out.axis_iter_mut(Axis(0)) {
        for mut lane in frame.lanes_mut(Axis(0)) {
            let max = lane.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            lane.mapv_inplace(|v| (v - max).exp());
            let sum = lane.sum();
            lane.mapv_inplace(|v| v / sum);
        }
    }
    WasMapStack::new(out)
}

/// Pulls a gradient with respect to softmax outputs back to the logits:
/// `dL/dx = p ⊙ (g − ⟨g, p⟩)` per pixel.
pub fn softmax_vjp(probs: &Array4<f64>, upstream: &Array4<f64>) -> Array4<f64> {
    let mut out = Array4::<f64>::zeros(probs.raw_dim());
    for ((mut o, p), g) in out
        .axis_iter_mut(Axis(0))
        .zip(probs.axis_iter(Axis(0)))
        .zip(upstream.axis_iter(Axis(0)))
    {
        Zip::from(o.lanes_mut(Axis(0)))
            .and(p.lanes(Axis(0)))
            .and(g.lanes(Axis(0)))
            .for_each(|mut o, p, g| {
                let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
                Zip::from(&mut o)
                    .and(&p)
                    .and(&g)
                    .for_each(|o, &p, &g| *o = p * (g - dot));
            });
    }
    out
}
