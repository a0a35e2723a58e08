//! Bilinear resampling with half-pixel centers (corners not aligned).
//!
//! Resizing is expressed as a pair of interpolation matrices so the same
//! operator can be applied to plain arrays here and to autodiff tensors in
//! the backend.

use ndarray::{s, Array2, Array3, Array4, ArrayView2, Axis};

/// Row-stochastic `out × in` matrix mapping samples on an `input` grid to an
/// `output` grid. Equal sizes give the identity exactly.
pub fn bilinear_matrix(input: usize, output: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((output, input));
    if input == 0 || output == 0 {
        return m;
    }
    let scale = input as f64 / output as f64;
    for dst in 0..output {
        let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        let frac = src - i0 as f64;
        m[[dst, i0]] += 1.0 - frac;
        m[[dst, i1]] += frac;
    }
    m
}

pub fn resize_plane(plane: ArrayView2<'_, f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = plane.dim();
    if (h, w) == (out_h, out_w) {
        return plane.to_owned();
    }
    let ry = bilinear_matrix(h, out_h);
    let rx = bilinear_matrix(w, out_w);
    ry.dot(&plane).dot(&rx.t())
}

/// Resizes the two trailing axes of an `(a, b, h, w)` volume.
pub fn resize_volume(vol: &Array4<f64>, out_h: usize, out_w: usize) -> Array4<f64> {
    let (a, b, h, w) = vol.dim();
    if (h, w) == (out_h, out_w) {
        return vol.clone();
    }
    let ry = bilinear_matrix(h, out_h);
    let rx = bilinear_matrix(w, out_w).reversed_axes();
    let mut out = Array4::<f64>::zeros((a, b, out_h, out_w));
    for i in 0..a {
        for j in 0..b {
            let plane = vol.slice(s![i, j, .., ..]);
            out.slice_mut(s![i, j, .., ..]).assign(&ry.dot(&plane).dot(&rx));
        }
    }
    out
}

/// Nearest-neighbour resize of a label plane (pixel centers).
pub fn resize_labels_nearest(labels: ArrayView2<'_, u8>, out_h: usize, out_w: usize) -> Array2<u8> {
    let (h, w) = labels.dim();
    Array2::from_shape_fn((out_h, out_w), |(y, x)| {
        let sy = (((y as f64 + 0.5) * h as f64 / out_h as f64) as usize).min(h - 1);
        let sx = (((x as f64 + 0.5) * w as f64 / out_w as f64) as usize).min(w - 1);
        labels[[sy, sx]]
    })
}

/// Bilinear resize of an RGB frame, rounding back to 8 bits.
pub fn resize_rgb(frame: &Array3<u8>, out_h: usize, out_w: usize) -> Array3<u8> {
    let (h, w, c) = frame.dim();
    if (h, w) == (out_h, out_w) {
        return frame.clone();
    }
    let ry = bilinear_matrix(h, out_h);
    let rx = bilinear_matrix(w, out_w).reversed_axes();
    let mut out = Array3::<u8>::zeros((out_h, out_w, c));
    for ch in 0..c {
        let plane = frame.index_axis(Axis(2), ch).mapv(f64::from);
        let resized = ry.dot(&plane).dot(&rx);
        out.index_axis_mut(Axis(2), ch)
            .assign(&resized.mapv(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_sizes_match() {
        let m = bilinear_matrix(5, 5);
        assert_eq!(m, Array2::eye(5));
    }

    #[test]
    fn rows_sum_to_one() {
        for (i, o) in [(4, 9), (9, 4), (16, 64), (3, 1)] {
            let m = bilinear_matrix(i, o);
            for row in m.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_by_two_matches_half_pixel_rule() {
        // Half-pixel mapping: dst 1 -> src 0.25, dst 2 -> src 0.75.
        let m = bilinear_matrix(2, 4);
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(m.row(1).to_vec(), vec![0.75, 0.25]);
        assert_eq!(m.row(2).to_vec(), vec![0.25, 0.75]);
        assert_eq!(m.row(3).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn constant_planes_stay_constant() {
        let plane = Array2::from_elem((3, 5), 0.7);
        let out = resize_plane(plane.view(), 8, 2);
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }
}
