//! The three training losses, as plain functions over arrays and as
//! differentiable tensor expressions used inside the optimizer loop.

use candle_core::{Device, Tensor};
use ndarray::{Array2, Array3, Array4};

use crate::error::{Result, TrainError};

/// Mean cross-entropy between the per-pixel distribution over segment
/// tokens (cross maps renormalized across the K+1 channels) and the labels.
/// `cross` is `(K+1, H, W)` at the label resolution.
pub fn loss_ce(cross: &Array3<f64>, labels: &Array2<u8>) -> Result<f64> {
    let (k1, h, w) = cross.dim();
    if (h, w) != labels.dim() {
        return Err(TrainError::ShapeMismatch(format!(
            "cross maps {h}x{w} vs labels {:?}",
            labels.dim()
        )));
    }
    let mut total = 0.0;
    for ((y, x), &l) in labels.indexed_iter() {
        let l = l as usize;
        if l >= k1 {
            return Err(TrainError::ShapeMismatch(format!("label {l} with {k1} channels")));
        }
        let sum: f64 = (0..k1).map(|k| cross[[k, y, x]]).sum();
        total -= (cross[[l, y, x]] / sum).ln();
    }
    Ok(total / (h * w) as f64)
}

/// Sum over foreground segments of the squared error between each score
/// map and its binary mask. `scores` is `(K+1, H, W)` at the label resolution.
pub fn loss_mse(scores: &Array3<f64>, labels: &Array2<u8>) -> Result<f64> {
    let (k1, h, w) = scores.dim();
    if (h, w) != labels.dim() {
        return Err(TrainError::ShapeMismatch(format!(
            "scores {h}x{w} vs labels {:?}",
            labels.dim()
        )));
    }
    let mut total = 0.0;
    for k in 1..k1 {
        for ((y, x), &l) in labels.indexed_iter() {
            let m = if l as usize == k { 1.0 } else { 0.0 };
            total += (scores[[k, y, x]] - m).powi(2);
        }
    }
    Ok(total)
}

/// Mean squared error between sampled and predicted noise.
pub fn loss_ldm(noise: &Array4<f64>, predicted: &Array4<f64>) -> Result<f64> {
    if noise.dim() != predicted.dim() {
        return Err(TrainError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            noise.dim(),
            predicted.dim()
        )));
    }
    Ok((noise - predicted).mapv(|v| v * v).mean().unwrap_or(0.0))
}

/// One-hot `(1, K+1, H, W)` encoding of a label map.
pub fn one_hot(labels: &Array2<u8>, k1: usize) -> Result<Tensor> {
    let (h, w) = labels.dim();
    let mut v = vec![0.0f64; k1 * h * w];
    for ((y, x), &l) in labels.indexed_iter() {
        if (l as usize) < k1 {
            v[(l as usize * h + y) * w + x] = 1.0;
        }
    }
    Ok(Tensor::from_vec(v, (1, k1, h, w), &Device::Cpu)?)
}

pub(crate) fn ce_tensor(cross: &Tensor, onehot: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = cross.dims4()?;
    let log_p = cross.broadcast_div(&cross.sum_keepdim(1)?)?.log()?;
    Ok(((onehot * log_p)?.sum_all()? * (-1.0 / (h * w) as f64))?)
}

pub(crate) fn mse_tensor(scores: &Tensor, onehot: &Tensor) -> Result<Tensor> {
    let k1 = scores.dims4()?.1;
    let fg_s = scores.narrow(1, 1, k1 - 1)?;
    let fg_m = onehot.narrow(1, 1, k1 - 1)?;
    Ok((fg_s - fg_m)?.sqr()?.sum_all()?)
}

pub(crate) fn ldm_tensor(noise: &Tensor, predicted: &Tensor) -> Result<Tensor> {
    Ok((noise - predicted)?.sqr()?.mean_all()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn perfect_and_uniform_cross_entropy() {
        let labels = Array2::from_shape_fn((4, 4), |(y, _)| (y % 2) as u8);
        let perfect = Array3::from_shape_fn((2, 4, 4), |(k, y, _)| if k == y % 2 { 1.0 } else { 0.0 });
        assert!(loss_ce(&perfect, &labels).unwrap() < 1e-6);
        let uniform = Array3::from_elem((2, 4, 4), 0.5);
        assert!((loss_ce(&uniform, &labels).unwrap() - 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_matches_hand_sum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let labels = Array2::from_shape_fn((4, 4), |_| rng.random_range(0..3u8));
        let cross = Array3::from_shape_fn((3, 4, 4), |_| rng.random_range(0.01..1.0));
        let mut expect = 0.0;
        for y in 0..4 {
            for x in 0..4 {
                let z: f64 = cross[[0, y, x]] + cross[[1, y, x]] + cross[[2, y, x]];
                expect += -(cross[[labels[[y, x]] as usize, y, x]] / z).ln();
            }
        }
        assert!((loss_ce(&cross, &labels).unwrap() - expect / 16.0).abs() < 1e-12);
    }

    #[test]
    fn mse_counts_positive_pixels_for_zero_scores() {
        let mut labels = Array2::<u8>::zeros((5, 5));
        labels[[1, 1]] = 1;
        labels[[2, 3]] = 1;
        labels[[4, 4]] = 2;
        assert_eq!(loss_mse(&Array3::zeros((3, 5, 5)), &labels).unwrap(), 3.0);
        let exact = Array3::from_shape_fn((3, 5, 5), |(k, y, x)| (labels[[y, x]] as usize == k) as u8 as f64);
        assert_eq!(loss_mse(&exact, &labels).unwrap(), 0.0);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let labels = Array2::from_shape_fn((6, 7), |_| rng.random_range(0..4u8));
        let s = Array3::from_shape_fn((4, 6, 7), |_| rng.random_range(-1.0..2.0));
        let mut expect = 0.0;
        for k in 1..4 {
            for y in 0..6 {
                for x in 0..7 {
                    let m = if labels[[y, x]] == k as u8 { 1.0 } else { 0.0 };
                    expect += (s[[k, y, x]] - m) * (s[[k, y, x]] - m);
                }
            }
        }
        assert!((loss_mse(&s, &labels).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ldm_loss_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = Array4::from_shape_simple_fn((1, 4, 3, 3), || rng.random_range(-2.0..2.0));
        assert_eq!(loss_ldm(&n, &n).unwrap(), 0.0);
        assert!((loss_ldm(&n, &(&n + 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let p = Array4::from_shape_simple_fn((1, 4, 3, 3), || rng.random_range(-2.0..2.0));
        let expect: f64 = n.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 36.0;
        assert!((loss_ldm(&n, &p).unwrap() - expect).abs() < 1e-12);
        assert!(loss_ldm(&n, &Array4::zeros((1, 4, 3, 2))).is_err());
    }

    #[test]
    fn tensor_losses_agree_with_array_losses() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let labels = Array2::from_shape_fn((5, 6), |_| rng.random_range(0..3u8));
        let maps = Array3::from_shape_fn((3, 5, 6), |_| rng.random_range(0.05..1.0));
        let t = Tensor::from_vec(maps.iter().copied().collect::<Vec<_>>(), (1, 3, 5, 6), &Device::Cpu).unwrap();
        let oh = one_hot(&labels, 3).unwrap();
        let ce: f64 = ce_tensor(&t, &oh).unwrap().to_scalar().unwrap();
        let mse: f64 = mse_tensor(&t, &oh).unwrap().to_scalar().unwrap();
        assert!((ce - loss_ce(&maps, &labels).unwrap()).abs() < 1e-12);
        assert!((mse - loss_mse(&maps, &labels).unwrap()).abs() < 1e-9);
    }
}
