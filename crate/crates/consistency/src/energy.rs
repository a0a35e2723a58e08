//! Tracking and low-pass regularization energies with their gradients with
//! respect to the (normalized) score stack.

use ndarray::{s, Array4, Axis};
use smite_core::scores::argmax_lowest;
use smite_core::WasMapStack;

use crate::dct::{channel, dct3, idct3, SpectralFilter};
use crate::error::{ConsistencyError, Result};
use crate::vote::TrackedScores;

/// Energy value and `∂E/∂S` for the stack it was evaluated at.
#[derive(Debug, Clone)]
pub struct EnergyGrad {
    pub value: f64,
    pub grad: Array4<f64>,
}

/// Cross-entropy target form used by the tracking energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// One-hot at the voted distribution's argmax.
    #[default]
    Hard,
    /// The voted distribution itself.
    Soft,
}

const LOG_FLOOR: f64 = 1e-300;

fn same_shape(a: &WasMapStack, b: &WasMapStack) -> Result<()> {
    if a.scores.dim() != b.scores.dim() {
        return Err(ConsistencyError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.scores.dim(),
            b.scores.dim()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of `scores` against the voted targets over the cells
/// that received a vote. Targets are constants.
pub fn energy_tracking_grad(scores: &WasMapStack, tracked: &TrackedScores, mode: TargetMode) -> Result<EnergyGrad> {
    same_shape(scores, &tracked.scores)?;
    let mut grad = Array4::<f64>::zeros(scores.scores.raw_dim());
    let n = tracked.updated_count();
    if n == 0 {
        return Ok(EnergyGrad { value: 0.0, grad });
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    for ((f, y, x), _) in tracked.updated.indexed_iter().filter(|(_, &u)| u) {
        let p = scores.scores.slice(s![f, .., y, x]);
        let q = tracked.scores.scores.slice(s![f, .., y, x]);
        match mode {
            TargetMode::Hard => {
                let k = argmax_lowest(q.iter().copied());
                let pk = p[k].max(LOG_FLOOR);
                value -= pk.ln();
                grad[[f, k, y, x]] = -inv / pk;
            }
            TargetMode::Soft => {
                for k in 0..p.len() {
                    let pk = p[k].max(LOG_FLOOR);
                    value -= q[k] * pk.ln();
                    grad[[f, k, y, x]] = -inv * q[k] / pk;
                }
            }
        }
    }
    Ok(EnergyGrad {
        value: value * inv,
        grad,
    })
}

pub fn energy_tracking(scores: &WasMapStack, tracked: &TrackedScores, mode: TargetMode) -> Result<f64> {
    energy_tracking_grad(scores, tracked, mode).map(|e| e.value)
}

/// `‖H ⊙ DCT(S) − H ⊙ DCT(S_ref)‖₁` per channel, summed over channels and
/// divided by the element count of `S`.
pub fn energy_reg_grad(scores: &WasMapStack, reference: &WasMapStack, filter: &SpectralFilter) -> Result<EnergyGrad> {
    same_shape(scores, reference)?;
    let (m, c, h, w) = scores.scores.dim();
    if filter.shape() != (m, h, w) {
        return Err(ConsistencyError::ShapeMismatch(format!(
            "filter {:?} for stack {:?}",
            filter.shape(),
            (m, h, w)
        )));
    }
    let count = (m * c * h * w) as f64;
    let diff = &scores.scores - &reference.scores;
    let mut value = 0.0;
    let mut grad = Array4::<f64>::zeros(diff.raw_dim());
    for ch in 0..c {
        let vol = channel(&diff, ch);
        let coeffs = dct3(&vol);
        // Coefficients at rounding-noise level get the zero subgradient, so
        // a stack whose gap is constant along an axis is pushed identically
        // along that axis.
        let peak = vol.fold(0.0f64, |a, &v| a.max(v.abs()));
        let dead = 64.0 * f64::EPSILON * ((m * h * w) as f64).sqrt() * peak;
        let mut signs = ndarray::Array3::<f64>::zeros(coeffs.raw_dim());
        for ((idx, &v), &keep) in coeffs.indexed_iter().zip(filter.mask.iter()) {
            if keep {
                value += v.abs();
                signs[idx] = if v > dead {
                    1.0
                } else if v < -dead {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        grad.index_axis_mut(Axis(1), ch).assign(&(idct3(&signs) / count));
    }
    Ok(EnergyGrad {
        value: value / count,
        grad,
    })
}

pub fn energy_reg(scores: &WasMapStack, reference: &WasMapStack, filter: &SpectralFilter) -> Result<f64> {
    energy_reg_grad(scores, reference, filter).map(|e| e.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dct::make_lowpass;
    use ndarray::Array3;

    fn one_cell(p: [f64; 2], target: [f64; 2]) -> (WasMapStack, TrackedScores) {
        let s = WasMapStack::new(Array4::from_shape_fn((1, 2, 1, 1), |(_, c, _, _)| p[c]));
        let t = TrackedScores {
            scores: WasMapStack::new(Array4::from_shape_fn((1, 2, 1, 1), |(_, c, _, _)| target[c])),
            updated: Array3::from_elem((1, 1, 1), true),
        };
        (s, t)
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let (s, t) = one_cell([0.5, 0.5], [0.9, 0.1]);
        let e = energy_tracking(&s, &t, TargetMode::Hard).unwrap();
        assert!((e - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_agreement_is_nearly_free() {
        let (s, t) = one_cell([1.0 - 1e-6, 1e-6], [1.0 - 1e-6, 1e-6]);
        assert!(energy_tracking(&s, &t, TargetMode::Hard).unwrap() < 1e-5);
    }

    #[test]
    fn no_updated_cells_means_zero() {
        let (s, mut t) = one_cell([0.3, 0.7], [0.9, 0.1]);
        t.updated.fill(false);
        let e = energy_tracking_grad(&s, &t, TargetMode::Hard).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn soft_targets_weight_every_channel() {
        let (s, t) = one_cell([0.25, 0.75], [0.5, 0.5]);
        let e = energy_tracking(&s, &t, TargetMode::Soft).unwrap();
        let want = -(0.5 * 0.25f64.ln() + 0.5 * 0.75f64.ln());
        assert!((e - want).abs() < 1e-12);
    }

    #[test]
    fn equal_stacks_have_no_reg_energy() {
        let s = WasMapStack::new(Array4::from_shape_fn((3, 2, 4, 4), |(a, b, c, d)| {
            (a + b * c + d) as f64 * 0.1
        }));
        let f = make_lowpass((3, 4, 4), 0.4).unwrap();
        assert_eq!(energy_reg(&s, &s, &f).unwrap(), 0.0);
    }

    #[test]
    fn frame_constant_gap_gets_frame_constant_gradient() {
        let frame = Array3::from_shape_fn((2, 5, 5), |(c, y, x)| ((c * 7 + y * 3 + x) % 5) as f64 * 0.13);
        let s = WasMapStack::new(Array4::from_shape_fn((6, 2, 5, 5), |(_, c, y, x)| frame[[c, y, x]]));
        let r = WasMapStack::new(s.scores.mapv(|v| 0.5 * v + 0.1));
        let f = make_lowpass((6, 5, 5), 0.6).unwrap();
        let g = energy_reg_grad(&s, &r, &f).unwrap().grad;
        for t in 1..6 {
            assert_eq!(g.index_axis(Axis(0), t), g.index_axis(Axis(0), 0));
        }
    }

    #[test]
    fn shape_checks() {
        let a = WasMapStack::new(Array4::zeros((2, 2, 4, 4)));
        let b = WasMapStack::new(Array4::zeros((2, 2, 4, 3)));
        let f = make_lowpass((2, 4, 4), 0.4).unwrap();
        assert!(energy_reg(&a, &b, &f).is_err());
        let f_bad = make_lowpass((3, 4, 4), 0.4).unwrap();
        assert!(energy_reg(&a, &a, &f_bad).is_err());
    }
}
