//! Small helpers between ndarray and candle tensors, and the layer
//! primitives the toy UNet is built from.

use candle_core::{DType, Device, Tensor, D};
use ndarray::{Array2, Array3, Array4};
use smite_core::resize::bilinear_matrix;

use crate::error::{DiffusionError, Result};

pub fn array2_tensor(a: &Array2<f64>) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        a.iter().copied().collect::<Vec<_>>(),
        a.dim(),
        &Device::Cpu,
    )?)
}

pub fn array4_tensor(a: &Array4<f64>) -> Result<Tensor> {
    Ok(Tensor::from_vec(
        a.iter().copied().collect::<Vec<_>>(),
        a.dim(),
        &Device::Cpu,
    )?)
}

pub fn tensor_array2(t: &Tensor) -> Result<Array2<f64>> {
    let (a, b) = t.dims2()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Array2::from_shape_vec((a, b), v).map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))
}

pub fn tensor_array3(t: &Tensor) -> Result<Array3<f64>> {
    let dims = t.dims3()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Array3::from_shape_vec(dims, v).map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))
}

pub fn tensor_array4(t: &Tensor) -> Result<Array4<f64>> {
    let dims = t.dims4()?;
    let v = t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?;
    Array4::from_shape_vec(dims, v).map_err(|e| DiffusionError::ShapeMismatch(e.to_string()))
}

/// `x @ w` over the last axis of `x`.
pub fn linear(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    Ok(x.broadcast_matmul(w)?)
}

/// Softmax over the last axis. The max shift is detached; it cancels in
/// the forward value and contributes nothing to the gradient.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let m = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&m)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

/// 3x3 convolution with zero padding applied to each frame separately.
pub fn conv3x3(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let c = b.dims1()?;
    Ok(x.conv2d(w, 1, 1, 1, 1)?.broadcast_add(&b.reshape((1, c, 1, 1))?)?)
}

/// Row-averaging matrix pooling `n` samples down by `factor`.
pub fn pool_matrix(n: usize, factor: usize) -> Array2<f64> {
    let out = n / factor;
    let mut m = Array2::zeros((out, n));
    for i in 0..out {
        for j in 0..factor {
            m[[i, i * factor + j]] = 1.0 / factor as f64;
        }
    }
    m
}

/// Separable resampling of the two trailing axes of an `(a, b, h, w)`
/// tensor by `ry (out_h × h)` and `rx (out_w × w)`.
pub fn resample(x: &Tensor, ry: &Array2<f64>, rx: &Array2<f64>) -> Result<Tensor> {
    let (a, b, h, w) = x.dims4()?;
    if ry.ncols() != h || rx.ncols() != w {
        return Err(DiffusionError::ShapeMismatch(format!(
            "resample {h}x{w} with {:?} / {:?}",
            ry.dim(),
            rx.dim()
        )));
    }
    let (oh, ow) = (ry.nrows(), rx.nrows());
    let ry_t = array2_tensor(ry)?;
    let rx_t = array2_tensor(&rx.t().to_owned())?;
    let flat = x.reshape((a * b, h, w))?;
    let rows = ry_t.broadcast_matmul(&flat)?;
    let out = rows.broadcast_matmul(&rx_t)?;
    Ok(out.reshape((a, b, oh, ow))?)
}

/// Bilinear (half-pixel) resize of the trailing axes; identity if sizes match.
pub fn resize_bilinear(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (out_h, out_w) {
        return Ok(x.clone());
    }
    resample(x, &bilinear_matrix(h, out_h), &bilinear_matrix(w, out_w))
}

pub fn avg_pool(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    resample(x, &pool_matrix(h, factor), &pool_matrix(w, factor))
}

/// `(n, channels)` fixed 2D sinusoidal encoding of an `h × w` grid in
/// normalized coordinates, so different resolutions see comparable codes.
pub fn position_encoding(h: usize, w: usize, channels: usize) -> Result<Tensor> {
    let quarter = (channels / 4).max(1);
    let mut data = vec![0.0; h * w * channels];
    for y in 0..h {
        for x in 0..w {
            let (py, px) = ((y as f64 + 0.5) / h as f64, (x as f64 + 0.5) / w as f64);
            let row = &mut data[(y * w + x) * channels..(y * w + x + 1) * channels];
            for i in 0..quarter {
                let freq = std::f64::consts::PI * (1 << i.min(8)) as f64;
                let slots = [
                    (py * freq).sin(),
                    (py * freq).cos(),
                    (px * freq).sin(),
                    (px * freq).cos(),
                ];
                for (j, v) in slots.iter().enumerate() {
                    let idx = j * quarter + i;
                    if idx < channels {
                        row[idx] = *v;
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(data, (h * w, channels), &Device::Cpu)?)
}

/// Sinusoidal timestep features of length `channels`.
pub fn timestep_features(t: usize, channels: usize) -> Result<Tensor> {
    let half = channels / 2;
    let mut v = vec![0.0; channels];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        v[i] = (t as f64 * freq).sin();
        v[half + i] = (t as f64 * freq).cos();
    }
    Ok(Tensor::from_vec(v, (1, channels), &Device::Cpu)?)
}
