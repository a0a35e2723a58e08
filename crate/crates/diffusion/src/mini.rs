//! A compact latent text-to-image denoiser with the same attention layout
//! as a Stable-Diffusion-style UNet: per-frame residual convolutions, one
//! attention level at half latent resolution (self + cross) and one at a
//! quarter (self + cross), with skip connections back up to the latent grid.
//!
//! Weights are loaded from `$SMITE_MODEL_CACHE/<model_id>.weights` when that
//! file exists and are otherwise drawn from a fixed seed, so every instance
//! with the same configuration is identical.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use candle_core::{Device, Tensor, Var};
use ndarray::{Array2, Array3, Array4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smite_core::resize::resize_volume;
use smite_core::{get_f64, get_u32, put_f64, put_u32, VideoClip, WasMapStack};

use crate::backend::{check_divisible, DiffusionBackend, WasVjp};
use crate::bundle::{expand_self_blocks, AttentionBundle, CrossLayer, SelfLayer};
use crate::error::{DiffusionError, Result};
use crate::schedule::{LatentState, NoiseSchedule};
use crate::state::{CrossAttentionKv, SegModelState};
use crate::tensor::*;

pub const MODEL_CACHE_ENV: &str = "SMITE_MODEL_CACHE";
const WEIGHTS_MAGIC: &[u8; 4] = b"MLW1";
const NUM_BLOCKS: usize = 2;
const SELF_AFFINITY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MiniLdmConfig {
    pub model_id: String,
    pub latent_channels: usize,
    pub hidden: usize,
    pub text_dim: usize,
    /// Pixels per latent cell along each axis.
    pub latent_factor: usize,
    pub seed: u64,
}

impl Default for MiniLdmConfig {
    fn default() -> Self {
        MiniLdmConfig {
            model_id: "mini-ldm-v1".into(),
            latent_channels: 4,
            hidden: 32,
            text_dim: 32,
            latent_factor: 8,
            seed: 0x5EED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionScope {
    /// Each frame attends only to its own patches (image model).
    PerFrame,
    /// Queries, keys and values span every frame's patches.
    Joint,
}

#[derive(Debug)]
struct AttnWeights {
    self_q: Tensor,
    self_k: Tensor,
    self_v: Tensor,
    self_o: Tensor,
    cross_q: Tensor,
    to_k: Tensor,
    to_v: Tensor,
    cross_o: Tensor,
    ff1: Tensor,
    ff2: Tensor,
}

#[derive(Debug)]
struct Weights {
    conv_in_w: Tensor,
    conv_in_b: Tensor,
    time1: Tensor,
    time2: Tensor,
    res_w: Tensor,
    res_b: Tensor,
    blocks: Vec<AttnWeights>,
    conv_out_w: Tensor,
    conv_out_b: Tensor,
    /// Frozen start/end prompt tokens, `(1, text_dim)` each.
    bos: Tensor,
    eos: Tensor,
}

impl Weights {
    fn named(&self) -> Vec<(String, &Tensor)> {
        let mut v: Vec<(String, &Tensor)> = vec![
            ("conv_in.w".into(), &self.conv_in_w),
            ("conv_in.b".into(), &self.conv_in_b),
            ("time.1".into(), &self.time1),
            ("time.2".into(), &self.time2),
            ("res.w".into(), &self.res_w),
            ("res.b".into(), &self.res_b),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (n, t) in [
                ("self_q", &b.self_q),
                ("self_k", &b.self_k),
                ("self_v", &b.self_v),
                ("self_o", &b.self_o),
                ("cross_q", &b.cross_q),
                ("to_k", &b.to_k),
                ("to_v", &b.to_v),
                ("cross_o", &b.cross_o),
                ("ff1", &b.ff1),
                ("ff2", &b.ff2),
            ] {
                v.push((format!("block{i}.{n}"), t));
            }
        }
        v.push(("conv_out.w".into(), &self.conv_out_w));
        v.push(("conv_out.b".into(), &self.conv_out_b));
        v.push(("tokens.bos".into(), &self.bos));
        v.push(("tokens.eos".into(), &self.eos));
        v
    }

    fn seeded(cfg: &MiniLdmConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (c, d, e) = (cfg.latent_channels, cfg.hidden, cfg.text_dim);
        let mut draw = |shape: &[usize], std: f64| -> Result<Tensor> {
            let n: usize = shape.iter().product();
            let v: Vec<f64> = (0..n)
                .map(|_| std * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            Ok(Tensor::from_vec(v, shape, &Device::Cpu)?)
        };
        let lin = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        // Self-attention compares features directly (scaled identity query
        // and key maps), so patches attend to similar-looking patches the
        // way a pretrained model's self-attention groups object parts.
        let affinity = |n: usize| -> Result<Tensor> {
            Ok((Tensor::eye(n, candle_core::DType::F64, &Device::Cpu)? * SELF_AFFINITY)?)
        };
        let conv_in_w = draw(&[d, c, 3, 3], lin(c * 9))?;
        let time1 = draw(&[d, d], lin(d))?;
        let time2 = draw(&[d, d], lin(d))?;
        let res_w = draw(&[d, d, 3, 3], lin(d * 9))?;
        let mut blocks = Vec::with_capacity(NUM_BLOCKS);
        for _ in 0..NUM_BLOCKS {
            blocks.push(AttnWeights {
                self_q: affinity(d)?,
                self_k: affinity(d)?,
                self_v: draw(&[d, d], lin(d))?,
                self_o: draw(&[d, d], 0.5 * lin(d))?,
                cross_q: draw(&[d, d], lin(d))?,
                to_k: draw(&[e, d], lin(e))?,
                to_v: draw(&[e, d], lin(e))?,
                cross_o: draw(&[d, d], 0.5 * lin(d))?,
                ff1: draw(&[d, 2 * d], lin(d))?,
                ff2: draw(&[2 * d, d], 0.5 * lin(2 * d))?,
            });
        }
        let conv_out_w = draw(&[c, d, 3, 3], 0.5 * lin(d * 9))?;
        let bos = draw(&[1, e], 1.0)?;
        let eos = draw(&[1, e], 1.0)?;
        let zeros = |n: usize| Tensor::zeros(n, candle_core::DType::F64, &Device::Cpu);
        Ok(Weights {
            conv_in_w,
            conv_in_b: zeros(d)?,
            time1,
            time2,
            res_w,
            res_b: zeros(d)?,
            blocks,
            conv_out_w,
            conv_out_b: zeros(c)?,
            bos,
            eos,
        })
    }

    fn replace_from(&mut self, loaded: Vec<(String, Tensor)>) -> Result<()> {
        let expected: Vec<(String, Vec<usize>)> =
            self.named().into_iter().map(|(n, t)| (n, t.dims().to_vec())).collect();
        if loaded.len() != expected.len() {
            return Err(DiffusionError::Checkpoint(format!(
                "weights file has {} tensors, model needs {}",
                loaded.len(),
                expected.len()
            )));
        }
        for ((name, t), (want, dims)) in loaded.iter().zip(&expected) {
            if name != want || t.dims() != dims.as_slice() {
                return Err(DiffusionError::Checkpoint(format!(
                    "weights entry `{name}` does not match `{want}` {dims:?}"
                )));
            }
        }
        let mut it = loaded.into_iter().map(|(_, t)| t);
        let mut next = || it.next().expect("length checked");
        self.conv_in_w = next();
        self.conv_in_b = next();
        self.time1 = next();
        self.time2 = next();
        self.res_w = next();
        self.res_b = next();
        for b in &mut self.blocks {
            b.self_q = next();
            b.self_k = next();
            b.self_v = next();
            b.self_o = next();
            b.cross_q = next();
            b.to_k = next();
            b.to_v = next();
            b.cross_o = next();
            b.ff1 = next();
            b.ff2 = next();
        }
        self.conv_out_w = next();
        self.conv_out_b = next();
        self.bos = next();
        self.eos = next();
        Ok(())
    }
}

/// Everything one denoiser pass exposes to callers that need gradients.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Predicted noise, shaped like the latent.
    pub eps: Tensor,
    /// Cross-attention probabilities `(frames, h·w, tokens)` per captured layer.
    pub cross: Vec<Tensor>,
    pub cross_res: Vec<(usize, usize)>,
    /// Captured self-attention `(blocks, L, L)`: one block for joint scope,
    /// one per frame otherwise.
    pub self_probs: Tensor,
    pub self_res: (usize, usize),
    pub frames: usize,
}

#[derive(Debug, Clone)]
pub struct MiniLdm {
    config: MiniLdmConfig,
    weights: Arc<Weights>,
    scope: AttentionScope,
    schedule: NoiseSchedule,
}

impl MiniLdm {
    /// The image (per-frame) model, weights from the cache when available.
    pub fn load(config: MiniLdmConfig) -> Result<Self> {
        let cached = std::env::var_os(MODEL_CACHE_ENV)
            .map(|dir| weights_path(Path::new(&dir), &config.model_id))
            .filter(|p| p.is_file());
        match cached {
            Some(path) => Self::from_weights_file(config, &path),
            None => Self::seeded(config),
        }
    }

    pub fn seeded(config: MiniLdmConfig) -> Result<Self> {
        if config.hidden < 4 || config.hidden % 4 != 0 || config.latent_channels < 4 || config.latent_factor == 0 {
            return Err(DiffusionError::UnsupportedArchitecture(format!("{config:?}")));
        }
        let weights = Weights::seeded(&config)?;
        Ok(MiniLdm {
            config,
            weights: Arc::new(weights),
            scope: AttentionScope::PerFrame,
            schedule: NoiseSchedule::default(),
        })
    }

    pub fn from_weights_file(config: MiniLdmConfig, path: &Path) -> Result<Self> {
        let mut model = Self::seeded(config)?;
        let loaded = read_weights(path)?;
        let mut weights = Weights::seeded(&model.config)?;
        weights.replace_from(loaded)?;
        model.weights = Arc::new(weights);
        Ok(model)
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(WEIGHTS_MAGIC)?;
        let named = self.weights.named();
        put_u32(&mut w, named.len() as u32)?;
        for (name, t) in named {
            put_u32(&mut w, name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            put_u32(&mut w, t.dims().len() as u32)?;
            for d in t.dims() {
                put_u32(&mut w, *d as u32)?;
            }
            for v in t.flatten_all()?.to_vec1::<f64>()? {
                put_f64(&mut w, v)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn config(&self) -> &MiniLdmConfig {
        &self.config
    }

    pub fn scope(&self) -> AttentionScope {
        self.scope
    }

    /// Flattened copy of every model parameter, in a fixed order.
    pub fn parameters(&self) -> Vec<(String, Vec<f64>)> {
        self.weights
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.flatten_all().and_then(|f| f.to_vec1::<f64>()).unwrap_or_default()))
            .collect()
    }

    /// Parameter count of the self- and cross-attention blocks.
    pub fn attention_parameter_count(&self) -> usize {
        self.weights
            .named()
            .iter()
            .filter(|(n, _)| n.starts_with("block"))
            .map(|(_, t)| t.elem_count())
            .sum()
    }

    pub fn num_cross_layers(&self) -> usize {
        NUM_BLOCKS
    }

    /// Token columns of the segment embeddings inside the prompt
    /// `[start, seg_0 .. seg_K, end]`.
    pub fn segment_tokens(&self, k: u8) -> Range<usize> {
        1..k as usize + 2
    }

    pub fn capture_description(&self) -> String {
        "cross@latent/2,cross@latent/4,self@latent/2".into()
    }

    /// Base key/value projections of every cross-attention layer.
    pub fn base_cross_attention(&self) -> Result<Vec<CrossAttentionKv>> {
        self.weights
            .blocks
            .iter()
            .map(|b| {
                Ok(CrossAttentionKv {
                    to_k: tensor_array2(&b.to_k)?,
                    to_v: tensor_array2(&b.to_v)?,
                })
            })
            .collect()
    }

    /// Deterministic embedding of a segment name.
    pub fn encode_name(&self, name: &str) -> Vec<f64> {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.trim().to_lowercase().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        (0..self.config.text_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    }

    /// Untrained state for `k` segments: embeddings from names when given,
    /// otherwise a small random draw; base key/value projections.
    pub fn initial_state(&self, k: u8, names: Option<&[String]>, seed: u64) -> Result<SegModelState> {
        let e = self.config.text_dim;
        let rows = k as usize + 1;
        let mut emb = Array2::<f64>::zeros((rows, e));
        match names {
            Some(names) if names.len() == rows => {
                for (i, n) in names.iter().enumerate() {
                    emb.row_mut(i).assign(&ndarray::Array1::from(self.encode_name(n)));
                }
            }
            Some(names) => {
                return Err(DiffusionError::ShapeMismatch(format!(
                    "{} names for {rows} segments",
                    names.len()
                )))
            }
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                emb.mapv_inplace(|_| 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
            }
        }
        Ok(SegModelState {
            text_embeddings: emb,
            cross_attention: self.base_cross_attention()?,
            base_model_id: self.config.model_id.clone(),
            capture: self.capture_description(),
        })
    }

    /// Prompt token matrix `(K+3, text_dim)` around the given segment embeddings.
    pub fn prompt(&self, embeddings: &Tensor) -> Result<Tensor> {
        Ok(Tensor::cat(&[&self.weights.bos, embeddings, &self.weights.eos], 0)?)
    }

    pub fn state_tensors(&self, state: &SegModelState) -> Result<(Tensor, Vec<(Tensor, Tensor)>)> {
        self.check_state(state)?;
        let emb = array2_tensor(&state.text_embeddings)?;
        let kv = state
            .cross_attention
            .iter()
            .map(|l| Ok((array2_tensor(&l.to_k)?, array2_tensor(&l.to_v)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok((emb, kv))
    }

    /// One denoiser pass. `tokens` is the full prompt, `kv` the key/value
    /// projections to use in each cross-attention layer.
    pub fn forward(&self, z: &Tensor, t: usize, tokens: &Tensor, kv: &[(Tensor, Tensor)]) -> Result<ForwardOutput> {
        let (frames, c, h, w) = z.dims4()?;
        if c != self.config.latent_channels {
            return Err(DiffusionError::ShapeMismatch(format!(
                "latent has {c} channels, model expects {}",
                self.config.latent_channels
            )));
        }
        check_divisible((h, w), 4)?;
        if kv.len() != NUM_BLOCKS {
            return Err(DiffusionError::ShapeMismatch(format!(
                "{} key/value pairs for {NUM_BLOCKS} layers",
                kv.len()
            )));
        }
        let wts = &self.weights;
        let d = self.config.hidden;

        let temb = timestep_features(t, d)?;
        let temb = linear(&linear(&temb, &wts.time1)?.silu()?, &wts.time2)?.reshape((1, d, 1, 1))?;
        let h0 = conv3x3(z, &wts.conv_in_w, &wts.conv_in_b)?.broadcast_add(&temb)?;
        let h0 = (&h0 + conv3x3(&h0.silu()?, &wts.res_w, &wts.res_b)?)?;

        let h1 = avg_pool(&h0, 2)?;
        let (h1, self1, cross1) = self.attn_block(&h1, &wts.blocks[0], tokens, &kv[0])?;
        let h2 = avg_pool(&h1, 2)?;
        let (h2, _, cross2) = self.attn_block(&h2, &wts.blocks[1], tokens, &kv[1])?;

        let u1 = (resize_bilinear(&h2, h / 2, w / 2)? + &h1)?;
        let u0 = (resize_bilinear(&u1, h, w)? + &h0)?;
        let eps = conv3x3(&u0.silu()?, &wts.conv_out_w, &wts.conv_out_b)?;
        Ok(ForwardOutput {
            eps,
            cross: vec![cross1, cross2],
            cross_res: vec![(h / 2, w / 2), (h / 4, w / 4)],
            self_probs: self1,
            self_res: (h / 2, w / 2),
            frames,
        })
    }

    fn attn_block(
        &self,
        x: &Tensor,
        b: &AttnWeights,
        tokens: &Tensor,
        kv: &(Tensor, Tensor),
    ) -> Result<(Tensor, Tensor, Tensor)> {
        let (f, d, h, w) = x.dims4()?;
        let n = h * w;
        let scale = 1.0 / (d as f64).sqrt();
        let pos = position_encoding(h, w, d)?;
        let seq = x
            .reshape((f, d, n))?
            .transpose(1, 2)?
            .contiguous()?
            .broadcast_add(&pos)?;

        let grouped = match self.scope {
            AttentionScope::Joint => seq.reshape((1, f * n, d))?,
            AttentionScope::PerFrame => seq.clone(),
        };
        let q = linear(&grouped, &b.self_q)?;
        let k = linear(&grouped, &b.self_k)?;
        let v = linear(&grouped, &b.self_v)?;
        let self_p = softmax_last(&(q.matmul(&k.transpose(1, 2)?.contiguous()?)? * scale)?)?;
        let attended = linear(&self_p.matmul(&v)?, &b.self_o)?.reshape((f, n, d))?;
        let seq = (seq + attended)?;

        let q = linear(&seq, &b.cross_q)?;
        let keys = tokens.matmul(&kv.0)?;
        let values = tokens.matmul(&kv.1)?;
        let cross_p = softmax_last(&(q.broadcast_matmul(&keys.t()?.contiguous()?)? * scale)?)?;
        let seq = (&seq + linear(&cross_p.broadcast_matmul(&values)?, &b.cross_o)?)?;

        let ff = linear(&linear(&seq, &b.ff1)?.silu()?, &b.ff2)?;
        let seq = (seq + ff)?;
        let out = seq.transpose(1, 2)?.contiguous()?.reshape((f, d, h, w))?;
        Ok((out, self_p, cross_p))
    }

    /// Segment-token cross maps averaged over layers after bilinear
    /// resizing to `res`: `(frames, K+1, h, w)`.
    pub fn segment_cross(&self, out: &ForwardOutput, segment: Range<usize>, res: (usize, usize)) -> Result<Tensor> {
        let k1 = segment.len();
        let mut acc: Option<Tensor> = None;
        for (p, &(h, w)) in out.cross.iter().zip(&out.cross_res) {
            let maps = p
                .narrow(2, segment.start, k1)?
                .transpose(1, 2)?
                .contiguous()?
                .reshape((out.frames, k1, h, w))?;
            let r = resize_bilinear(&maps, res.0, res.1)?;
            acc = Some(match acc {
                Some(a) => (a + r)?,
                None => r,
            });
        }
        let acc = acc.ok_or(DiffusionError::EmptyBundle)?;
        Ok((acc / out.cross.len() as f64)?)
    }

    /// WAS stack `(frames, K+1, out_h, out_w)` as a differentiable tensor.
    pub fn was_tensor(&self, out: &ForwardOutput, segment: Range<usize>, out_res: (usize, usize)) -> Result<Tensor> {
        let k1 = segment.len();
        let (hs, ws) = out.self_res;
        let ns = hs * ws;
        let f = out.frames;
        let r = self.segment_cross(out, segment, (hs, ws))?;
        let rows = r.reshape((f, k1, ns))?.transpose(1, 2)?.contiguous()?;
        let blocks = out.self_probs.dims3()?.0;
        let rows = if blocks == 1 {
            rows.reshape((1, f * ns, k1))?
        } else {
            rows
        };
        let s = out.self_probs.matmul(&rows)?;
        let s = s
            .reshape((f, ns, k1))?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((f, k1, hs, ws))?;
        resize_bilinear(&s, out_res.0, out_res.1)
    }

    fn run(&self, latent: &LatentState, state: &SegModelState, z: &Tensor) -> Result<ForwardOutput> {
        let (emb, kv) = self.state_tensors(state)?;
        let tokens = self.prompt(&emb)?;
        self.forward(z, latent.timestep, &tokens, &kv)
    }

    /// Inverse of the colour mixing in [`DiffusionBackend::encode_video`]
    /// followed by bilinear upsampling.
    pub fn decode_latent(&self, latent: &LatentState) -> Result<Vec<Array3<u8>>> {
        let (frames, _, h, w) = latent.z.dim();
        let f = self.config.latent_factor;
        let inv = inverse3(&COLOR_MIX);
        let rgb = Array4::from_shape_fn((frames, 3, h, w), |(fr, c, y, x)| {
            (0..3).map(|j| inv[c][j] * latent.z[[fr, j, y, x]]).sum::<f64>()
        });
        let up = resize_volume(&rgb, h * f, w * f);
        Ok((0..frames)
            .map(|fr| {
                Array3::from_shape_fn((h * f, w * f, 3), |(y, x, c)| {
                    ((up[[fr, c, y, x]] + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
                })
            })
            .collect())
    }
}

/// Builds the video model: same weights, attention widened to span all frames.
pub fn inflate(base: &MiniLdm) -> Result<MiniLdm> {
    if base.scope != AttentionScope::PerFrame {
        return Err(DiffusionError::UnsupportedArchitecture(
            "model is already inflated".into(),
        ));
    }
    Ok(MiniLdm {
        config: base.config.clone(),
        weights: Arc::clone(&base.weights),
        scope: AttentionScope::Joint,
        schedule: base.schedule.clone(),
    })
}

/// Rows: luma and two chroma differences.
const COLOR_MIX: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168_736, -0.331_264, 0.5],
    [0.5, -0.418_688, -0.081_312],
];

fn inverse3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    inv
}

pub fn weights_path(cache_dir: &Path, model_id: &str) -> PathBuf {
    cache_dir.join(format!("{model_id}.weights"))
}

fn read_weights(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(DiffusionError::Checkpoint(format!(
            "{} is not a weights file",
            path.display()
        )));
    }
    let count = get_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = get_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        let nd = get_u32(&mut r)? as usize;
        let dims = (0..nd)
            .map(|_| get_u32(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| get_f64(&mut r)).collect::<std::io::Result<Vec<_>>>()?;
        out.push((name, Tensor::from_vec(data, dims, &Device::Cpu)?));
    }
    Ok(out)
}

impl DiffusionBackend for MiniLdm {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn frame_multiple(&self) -> usize {
        self.config.latent_factor * 4
    }

    fn score_resolution(&self, latent: &LatentState) -> (usize, usize) {
        let (_, _, h, w) = latent.z.dim();
        (h, w)
    }

    fn check_state(&self, state: &SegModelState) -> Result<()> {
        if state.base_model_id != self.config.model_id {
            return Err(DiffusionError::Checkpoint(format!(
                "state was trained on `{}`, model is `{}`",
                state.base_model_id, self.config.model_id
            )));
        }
        let (e, d) = (self.config.text_dim, self.config.hidden);
        if state.text_dim() != e || state.text_embeddings.nrows() < 2 {
            return Err(DiffusionError::ShapeMismatch(format!(
                "embeddings {:?}, text dim {e}",
                state.text_embeddings.dim()
            )));
        }
        if state.cross_attention.len() != NUM_BLOCKS
            || state
                .cross_attention
                .iter()
                .any(|l| l.to_k.dim() != (e, d) || l.to_v.dim() != (e, d))
        {
            return Err(DiffusionError::ShapeMismatch(
                "cross-attention projections do not match the model".into(),
            ));
        }
        Ok(())
    }

    fn encode_video(&self, video: &VideoClip) -> Result<LatentState> {
        let (hh, ww) = video.frame_size();
        check_divisible((hh, ww), self.frame_multiple())?;
        let f = self.config.latent_factor;
        let (h, w) = (hh / f, ww / f);
        let c = self.config.latent_channels;
        let mut z = Array4::<f64>::zeros((video.len(), c, h, w));
        let area = (f * f) as f64;
        for (fr, img) in video.frames().iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let mut mean = [0.0; 3];
                    let mut luma_sq = 0.0;
                    for py in y * f..(y + 1) * f {
                        for px in x * f..(x + 1) * f {
                            let rgb: [f64; 3] = std::array::from_fn(|k| img[[py, px, k]] as f64 / 127.5 - 1.0);
                            let luma: f64 = (0..3).map(|k| COLOR_MIX[0][k] * rgb[k]).sum();
                            luma_sq += luma * luma;
                            for k in 0..3 {
                                mean[k] += rgb[k] / area;
                            }
                        }
                    }
                    for j in 0..3 {
                        z[[fr, j, y, x]] = (0..3).map(|k| COLOR_MIX[j][k] * mean[k]).sum();
                    }
                    let luma_mean = z[[fr, 0, y, x]];
                    let var = (luma_sq / area - luma_mean * luma_mean).max(0.0);
                    z[[fr, 3, y, x]] = 4.0 * var.sqrt();
                }
            }
        }
        Ok(LatentState { z, timestep: 0 })
    }

    fn predict_noise(&self, latent: &LatentState, state: &SegModelState) -> Result<Array4<f64>> {
        let z = array4_tensor(&latent.z)?;
        tensor_array4(&self.run(latent, state, &z)?.eps)
    }

    fn capture_attention(&self, latent: &LatentState, state: &SegModelState) -> Result<AttentionBundle> {
        let z = array4_tensor(&latent.z)?;
        let out = self.run(latent, state, &z)?;
        let k1 = state.text_embeddings.nrows();
        let mut cross = Vec::with_capacity(out.cross.len());
        for (p, &(h, w)) in out.cross.iter().zip(&out.cross_res) {
            let (f, _, t) = p.dims3()?;
            let maps = p.transpose(1, 2)?.contiguous()?.reshape((f, t, h, w))?;
            cross.push(CrossLayer {
                maps: tensor_array4(&maps)?,
            });
        }
        let blocks = tensor_array3(&out.self_probs)?;
        let self_attn = vec![SelfLayer {
            resolution: out.self_res,
            maps: expand_self_blocks(&blocks, out.frames)?,
        }];
        Ok(AttentionBundle {
            frames: out.frames,
            cross,
            self_attn,
            segment_tokens: 1..k1 + 1,
            output_resolution: Some(self.score_resolution(latent)),
        })
    }

    fn was_scores(&self, latent: &LatentState, state: &SegModelState) -> Result<WasMapStack> {
        let z = array4_tensor(&latent.z)?;
        let out = self.run(latent, state, &z)?;
        let k1 = state.text_embeddings.nrows();
        let s = self.was_tensor(&out, 1..k1 + 1, self.score_resolution(latent))?;
        Ok(WasMapStack::new(tensor_array4(&s)?))
    }

    fn was_vjp(&self, latent: &LatentState, state: &SegModelState, upstream: &Array4<f64>) -> Result<WasVjp> {
        let z = Var::from_tensor(&array4_tensor(&latent.z)?)?;
        let out = self.run(latent, state, z.as_tensor())?;
        let k1 = state.text_embeddings.nrows();
        let s = self.was_tensor(&out, 1..k1 + 1, self.score_resolution(latent))?;
        if s.dims() != [upstream.dim().0, upstream.dim().1, upstream.dim().2, upstream.dim().3] {
            return Err(DiffusionError::ShapeMismatch(format!(
                "upstream {:?} vs scores {:?}",
                upstream.dim(),
                s.dims()
            )));
        }
        let loss = (&s * array4_tensor(upstream)?)?.sum_all()?;
        let grads = loss.backward()?;
        let grad = match grads.get(z.as_tensor()) {
            Some(g) => tensor_array4(g)?,
            None => Array4::zeros(latent.z.dim()),
        };
        Ok(WasVjp {
            scores: WasMapStack::new(tensor_array4(&s)?),
            grad,
        })
    }

    fn attention_bytes(&self, latent: &LatentState) -> usize {
        let (f, _, h, w) = latent.z.dim();
        let cells = (h / 2) * (w / 2);
        let rows = match self.scope {
            AttentionScope::Joint => (f * cells) * (f * cells),
            AttentionScope::PerFrame => f * cells * cells,
        };
        // probabilities, logits and their gradients, per block
        rows * std::mem::size_of::<f64>() * 4 * NUM_BLOCKS
    }
}
