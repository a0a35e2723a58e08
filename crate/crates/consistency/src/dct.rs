//! Orthonormal separable type-II DCT over `(frame, y, x)` volumes.

use ndarray::{Array2, Array3, Array4, Axis};

use crate::error::{ConsistencyError, Result};

/// `n × n` orthonormal DCT-II basis; row `k` is frequency `k`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    let nf = n as f64;
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// Applies `matrix` along `axis` of `vol`.
fn along(vol: &Array3<f64>, matrix: &Array2<f64>, axis: usize) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros(vol.raw_dim());
    for (src, mut dst) in vol.lanes(Axis(axis)).into_iter().zip(out.lanes_mut(Axis(axis))) {
        dst.assign(&matrix.dot(&src));
    }
    out
}

fn transform(vol: &Array3<f64>, inverse: bool) -> Array3<f64> {
    let (a, b, c) = vol.dim();
    let mut out = vol.clone();
    for (axis, n) in [(0, a), (1, b), (2, c)] {
        let m = dct_matrix(n);
        let m = if inverse { m.reversed_axes() } else { m };
        out = along(&out, &m, axis);
    }
    out
}

pub fn dct3(vol: &Array3<f64>) -> Array3<f64> {
    transform(vol, false)
}

pub fn idct3(coeffs: &Array3<f64>) -> Array3<f64> {
    transform(coeffs, true)
}

/// Binary low-pass mask in DCT coefficient layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFilter {
    pub mask: Array3<bool>,
    pub threshold: f64,
}

impl SpectralFilter {
    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&k| k).count()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.mask.dim()
    }
}

/// Keeps coefficient `(a, b, c)` of an `M × h × w` volume iff
/// `a/M ≤ τ`, `b/h ≤ τ` and `c/w ≤ τ`.
pub fn make_lowpass(shape: (usize, usize, usize), threshold: f64) -> Result<SpectralFilter> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(ConsistencyError::InvalidThreshold(threshold));
    }
    let (m, h, w) = shape;
    let keep = |i: usize, n: usize| i as f64 <= threshold * n as f64 + 1e-9;
    let mask = Array3::from_shape_fn(shape, |(a, b, c)| keep(a, m) && keep(b, h) && keep(c, w));
    Ok(SpectralFilter { mask, threshold })
}

/// Masked DCT of one channel of a `(frames, channels, h, w)` stack.
pub(crate) fn channel(vol: &Array4<f64>, c: usize) -> Array3<f64> {
    vol.index_axis(Axis(1), c).to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        for n in [1, 2, 5, 8] {
            let m = dct_matrix(n);
            let eye = m.dot(&m.t());
            for ((i, j), v) in eye.indexed_iter() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_volume_is_dc_only() {
        let (m, h, w) = (3, 4, 5);
        let c = 0.37;
        let coeffs = dct3(&Array3::from_elem((m, h, w), c));
        let dc = c * ((m * h * w) as f64).sqrt();
        assert!((coeffs[[0, 0, 0]] - dc).abs() < 1e-12);
        let rest: f64 = coeffs.iter().skip(1).map(|v| v.abs()).sum();
        assert!(rest < 1e-12);
    }

    #[test]
    fn single_point_matches_direct_sum() {
        let vol = Array3::from_shape_fn((2, 3, 4), |(a, b, c)| ((a * 12 + b * 4 + c) as f64).sin());
        let coeffs = dct3(&vol);
        let (m, h, w) = vol.dim();
        let basis = |k: usize, i: usize, n: usize| {
            let s = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos()
        };
        let (ka, kb, kc) = (1, 2, 3);
        let mut direct = 0.0;
        for a in 0..m {
            for b in 0..h {
                for c in 0..w {
                    direct += vol[[a, b, c]] * basis(ka, a, m) * basis(kb, b, h) * basis(kc, c, w);
                }
            }
        }
        assert!((coeffs[[ka, kb, kc]] - direct).abs() < 1e-12);
    }

    #[test]
    fn lowpass_counts() {
        let all = make_lowpass((4, 6, 7), 1.0).unwrap();
        assert_eq!(all.kept(), 4 * 6 * 7);
        let f = make_lowpass((10, 10, 10), 0.4).unwrap();
        assert_eq!(f.kept(), 125);
        assert!(f.mask[[4, 4, 4]] && !f.mask[[5, 0, 0]]);
        for tau in [0.01, 0.1, 0.4, 0.99] {
            assert!(make_lowpass((3, 5, 9), tau).unwrap().mask[[0, 0, 0]]);
        }
    }

    #[test]
    fn lowpass_is_axis_monotone() {
        let f = make_lowpass((6, 9, 11), 0.45).unwrap();
        for ((a, b, c), &k) in f.mask.indexed_iter() {
            if k {
                assert!(a == 0 || f.mask[[a - 1, b, c]]);
                assert!(b == 0 || f.mask[[a, b - 1, c]]);
                assert!(c == 0 || f.mask[[a, b, c - 1]]);
            }
        }
    }

    #[test]
    fn invalid_thresholds() {
        for tau in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(make_lowpass((2, 2, 2), tau).is_err());
        }
    }
}
