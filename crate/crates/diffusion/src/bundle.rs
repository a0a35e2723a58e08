//! Captured attention maps and their combination into WAS score maps.

use std::ops::Range;

use ndarray::{s, Array2, Array3, Array4};
use smite_core::resize::resize_volume;
use smite_core::WasMapStack;

use crate::error::{DiffusionError, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Cross-attention probabilities of one layer, laid out `(frames, tokens, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossLayer {
    pub maps: Array4<f64>,
}

impl CrossLayer {
    pub fn resolution(&self) -> (usize, usize) {
        let (_, _, h, w) = self.maps.dim();
        (h, w)
    }
}

/// Self-attention probabilities of one layer over all frames' patches.
///
/// Rows are queries and columns keys, both flattened frame-major then
/// row-major, so the matrix is `(frames·h·w) × (frames·h·w)`. Per-frame
/// attention shows up as a block-diagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfLayer {
    pub resolution: (usize, usize),
    pub maps: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionBundle {
    pub frames: usize,
    pub cross: Vec<CrossLayer>,
    pub self_attn: Vec<SelfLayer>,
    /// Token columns holding the K+1 segment tokens, background first.
    pub segment_tokens: Range<usize>,
    /// Resolution of the returned score maps; `None` keeps the self-attention grid.
    pub output_resolution: Option<(usize, usize)>,
}

impl AttentionBundle {
    pub fn layer_resolutions(&self) -> Vec<(usize, usize)> {
        let mut res: Vec<(usize, usize)> = self.cross.iter().map(CrossLayer::resolution).collect();
        res.extend(self.self_attn.iter().map(|l| l.resolution));
        res.sort_unstable();
        res.dedup();
        res
    }

    pub fn num_segment_tokens(&self) -> usize {
        self.segment_tokens.len()
    }

    /// Checks shapes and that every attention row is a distribution.
    pub fn validate(&self) -> Result<()> {
        if self.cross.is_empty() || self.self_attn.is_empty() {
            return Err(DiffusionError::EmptyBundle);
        }
        for (i, layer) in self.cross.iter().enumerate() {
            let (f, tokens, h, w) = layer.maps.dim();
            if f != self.frames {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "cross layer {i} has {f} frames, expected {}",
                    self.frames
                )));
            }
            if self.segment_tokens.end > tokens || self.segment_tokens.is_empty() {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "cross layer {i} has {tokens} tokens, segment tokens {:?}",
                    self.segment_tokens
                )));
            }
            for fr in 0..f {
                for y in 0..h {
                    for x in 0..w {
                        let row = layer.maps.slice(s![fr, .., y, x]);
                        check_row(row.iter().copied(), || {
                            format!("cross layer {i}, frame {fr}, ({y},{x})")
                        })?;
                    }
                }
            }
        }
        for (i, layer) in self.self_attn.iter().enumerate() {
            let p = self.frames * layer.resolution.0 * layer.resolution.1;
            if layer.maps.dim() != (p, p) {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "self layer {i} is {:?}, expected ({p}, {p})",
                    layer.maps.dim()
                )));
            }
            for (q, row) in layer.maps.rows().into_iter().enumerate() {
                check_row(row.iter().copied(), || format!("self layer {i}, query {q}"))?;
            }
        }
        Ok(())
    }
}

fn check_row(values: impl Iterator<Item = f64>, context: impl Fn() -> String) -> Result<()> {
    let mut sum = 0.0;
    for v in values {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(DiffusionError::InvalidAttention(format!(
                "{}: negative or non-finite weight",
                context()
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(DiffusionError::InvalidAttention(format!(
            "{}: row sums to {sum}",
            context()
        )));
    }
    Ok(())
}

/// Averages the segment-token cross maps over layers after resizing each to `res`.
pub fn average_cross(bundle: &AttentionBundle, res: (usize, usize)) -> Result<Array4<f64>> {
    if bundle.cross.is_empty() {
        return Err(DiffusionError::EmptyBundle);
    }
    let k1 = bundle.num_segment_tokens();
    let mut acc = Array4::<f64>::zeros((bundle.frames, k1, res.0, res.1));
    for layer in &bundle.cross {
        let seg = layer
            .maps
            .slice(s![.., bundle.segment_tokens.clone(), .., ..])
            .to_owned();
        acc += &resize_volume(&seg, res.0, res.1);
    }
    acc /= bundle.cross.len() as f64;
    Ok(acc)
}

/// Averages the self-attention matrices; all layers must share one resolution.
pub fn average_self(bundle: &AttentionBundle) -> Result<(Array2<f64>, (usize, usize))> {
    let first = bundle.self_attn.first().ok_or(DiffusionError::EmptyBundle)?;
    let res = first.resolution;
    let mut acc = Array2::<f64>::zeros(first.maps.dim());
    for layer in &bundle.self_attn {
        if layer.resolution != res || layer.maps.dim() != acc.dim() {
            return Err(DiffusionError::ResolutionMismatch(format!(
                "self-attention layers at {:?} and {:?}",
                res, layer.resolution
            )));
        }
        acc += &layer.maps;
    }
    acc /= bundle.self_attn.len() as f64;
    Ok((acc, res))
}

/// Weighted accumulated self-attention: each query pixel collects the
/// resized cross-attention of every key pixel, weighted by its self-attention.
///
/// `S^k[q] = Σ_p A_sa[q, p] · R^k[p]`, summed in f64, reshaped per frame and
/// finally resized bilinearly to `output_resolution` when set.
pub fn compute_was_maps(bundle: &AttentionBundle) -> Result<WasMapStack> {
    if bundle.cross.is_empty() || bundle.self_attn.is_empty() {
        return Err(DiffusionError::EmptyBundle);
    }
    let (a_sa, (h, w)) = average_self(bundle)?;
    let r_ca = average_cross(bundle, (h, w))?;
    let (frames, k1) = (bundle.frames, bundle.num_segment_tokens());
    let p = frames * h * w;
    if a_sa.dim() != (p, p) {
        return Err(DiffusionError::ResolutionMismatch(format!(
            "self-attention is {:?} but {frames} frames at {h}x{w} need {p}",
            a_sa.dim()
        )));
    }
    // (P, K+1) with rows ordered like the attention axes.
    let r_flat = r_ca
        .permuted_axes([0, 2, 3, 1])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((p, k1))
        .map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))?;
    let s_flat = a_sa.dot(&r_flat);
    let s = s_flat
        .into_shape_with_order((frames, h, w, k1))
        .map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))?
        .permuted_axes([0, 3, 1, 2])
        .as_standard_layout()
        .into_owned();
    let s = match bundle.output_resolution {
        Some((oh, ow)) if (oh, ow) != (h, w) => resize_volume(&s, oh, ow),
        _ => s,
    };
    Ok(WasMapStack::new(s))
}

/// Re-arranges `(batch, L, L)` per-block attention into the bundle's
/// full `(frames·h·w)²` layout. A batch of one is joint attention; a batch
/// equal to the frame count is per-frame attention.
pub fn expand_self_blocks(blocks: &Array3<f64>, frames: usize) -> Result<Array2<f64>> {
    let (b, l, l2) = blocks.dim();
    if l != l2 || (b != 1 && b != frames) {
        return Err(DiffusionError::ShapeMismatch(format!(
            "self blocks {:?} for {frames} frames",
            blocks.dim()
        )));
    }
    let p = if b == 1 { l } else { l * frames };
    let mut full = Array2::<f64>::zeros((p, p));
    for i in 0..b {
        full.slice_mut(s![i * l..(i + 1) * l, i * l..(i + 1) * l])
            .assign(&blocks.slice(s![i, .., ..]));
    }
    Ok(full)
}
