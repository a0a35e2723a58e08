//! Two-phase optimization: segment embeddings first, then embeddings
//! together with every cross-attention key/value projection.

use std::io::Write;
use std::path::Path;

use candle_core::{Tensor, Var};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smite_core::{ReferenceExample, VideoClip};
use smite_diffusion::schedule::iid_noise;
use smite_diffusion::tensor::{array2_tensor, array4_tensor, tensor_array2};
use smite_diffusion::{CrossAttentionKv, DiffusionBackend, LatentState, MiniLdm, SegModelState};

use crate::adam::Adam;
use crate::config::TrainConfig;
use crate::error::{Result, TrainError};
use crate::loss::{ce_tensor, ldm_tensor, mse_tensor, one_hot};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub ce: f64,
    pub mse: f64,
    pub ldm: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub iter: usize,
    /// 1 or 2; 0 for single-phase joint training.
    pub phase: u8,
    pub parts: LossParts,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: SegModelState,
    pub log: Vec<LossRecord>,
}

struct Prepared {
    latent: LatentState,
    labels: Array2<u8>,
    onehot: Tensor,
}

fn check_k(refs: &[ReferenceExample]) -> Result<u8> {
    let first = refs.first().ok_or(TrainError::NoReferences)?;
    let k = first.num_segments;
    if let Some(bad) = refs.iter().find(|r| r.num_segments != k) {
        return Err(TrainError::InconsistentK(format!(
            "`{}` has K = {k}, `{}` has K = {}",
            first.stem, bad.stem, bad.num_segments
        )));
    }
    Ok(k)
}

fn prepare(refs: &[ReferenceExample], model: &MiniLdm) -> Result<Vec<Prepared>> {
    refs.iter()
        .map(|r| {
            // References are single-frame videos.
            let clip = VideoClip::new(vec![r.image.clone()], 1.0, r.stem.clone())?;
            let latent = model.encode_video(&clip)?;
            Ok(Prepared {
                latent,
                labels: r.label_map.clone(),
                onehot: one_hot(&r.label_map, r.num_segments as usize + 1)?,
            })
        })
        .collect()
}

/// Loss of one reference at a given timestep and noise draw.
fn reference_loss(
    model: &MiniLdm,
    cfg: &TrainConfig,
    prep: &Prepared,
    emb: &Tensor,
    kv: &[(Tensor, Tensor)],
    t: usize,
    noise_seed: u64,
) -> Result<(Tensor, LossParts)> {
    let noise = iid_noise(prep.latent.z.dim(), noise_seed);
    let noisy = model.schedule().add_noise(&prep.latent, &noise, t)?;
    let tokens = model.prompt(emb)?;
    let out = model.forward(&array4_tensor(&noisy.z)?, t, &tokens, kv)?;
    let k1 = emb.dims2()?.0;
    let seg = 1..k1 + 1;
    let res = prep.labels.dim();
    let cross = model.segment_cross(&out, seg.clone(), res)?;
    let scores = model.was_tensor(&out, seg, res)?;
    let ce = ce_tensor(&cross, &prep.onehot)?;
    let mse = mse_tensor(&scores, &prep.onehot)?;
    let ldm = ldm_tensor(&array4_tensor(&noise)?, &out.eps)?;
    let total = ((&ce + (&mse * cfg.alpha_mse)?)? + (&ldm * cfg.beta_ldm)?)?;
    let parts = LossParts {
        ce: ce.to_scalar()?,
        mse: mse.to_scalar()?,
        ldm: ldm.to_scalar()?,
        total: total.to_scalar()?,
    };
    Ok((total, parts))
}

fn mean_parts(parts: &[LossParts]) -> LossParts {
    let n = parts.len().max(1) as f64;
    let mut m = LossParts::default();
    for p in parts {
        m.ce += p.ce / n;
        m.mse += p.mse / n;
        m.ldm += p.ldm / n;
        m.total += p.total / n;
    }
    m
}

struct Run<'a> {
    model: &'a MiniLdm,
    cfg: &'a TrainConfig,
    prepared: Vec<Prepared>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    iter: usize,
    log: Vec<LossRecord>,
}

impl Run<'_> {
    fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    fn iterate(
        &mut self,
        phase: u8,
        iters: usize,
        emb: &Var,
        kv: &[(Var, Var)],
        train_kv: bool,
        opt: &mut Adam,
    ) -> Result<()> {
        let kv_t: Vec<(Tensor, Tensor)> = kv
            .iter()
            .map(|(k, v)| {
                if train_kv {
                    (k.as_tensor().clone(), v.as_tensor().clone())
                } else {
                    (k.as_tensor().detach(), v.as_tensor().detach())
                }
            })
            .collect();
        for _ in 0..iters {
            let batch = self.next_batch();
            let mut total: Option<Tensor> = None;
            let mut parts = Vec::with_capacity(batch.len());
            for &i in &batch {
                let t = self.rng.random_range(1..=self.cfg.max_train_timestep);
                let seed = self.rng.next_u64();
                let (loss, p) =
                    reference_loss(self.model, self.cfg, &self.prepared[i], emb.as_tensor(), &kv_t, t, seed)?;
                parts.push(p);
                total = Some(match total {
                    Some(acc) => (acc + loss)?,
                    None => loss,
                });
            }
            let record = mean_parts(&parts);
            if !record.total.is_finite() {
                return Err(TrainError::DivergedLoss { iter: self.iter });
            }
            let total = (total.expect("batch_size >= 1") / batch.len() as f64)?;
            let grads = total.backward()?;
            opt.step(&grads)?;
            if self.iter % 10 == 0 {
                log::info!(
                    "iter {} phase {phase}: ce {:.4} mse {:.4} ldm {:.4} total {:.4}",
                    self.iter,
                    record.ce,
                    record.mse,
                    record.ldm,
                    record.total
                );
            }
            self.log.push(LossRecord {
                iter: self.iter,
                phase,
                parts: record,
            });
            self.iter += 1;
        }
        Ok(())
    }
}

/// Learns segment embeddings (and, in phase two, cross-attention key/value
/// projections) from annotated references. The model itself is never modified.
pub fn train(refs: &[ReferenceExample], model: &MiniLdm, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = check_k(refs)?;
    let names = (!cfg.segment_names.is_empty()).then_some(cfg.segment_names.as_slice());
    let init = model.initial_state(k, names, cfg.seed)?;

    let emb = Var::from_tensor(&array2_tensor(&init.text_embeddings)?)?;
    let kv: Vec<(Var, Var)> = init
        .cross_attention
        .iter()
        .map(|l| {
            Ok((
                Var::from_tensor(&array2_tensor(&l.to_k)?)?,
                Var::from_tensor(&array2_tensor(&l.to_v)?)?,
            ))
        })
        .collect::<Result<_>>()?;
    let kv_vars = || kv.iter().flat_map(|(k, v)| [k.clone(), v.clone()]).collect::<Vec<_>>();

    let mut run = Run {
        model,
        cfg,
        prepared: prepare(refs, model)?,
        order: (0..refs.len()).collect(),
        cursor: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        iter: 0,
        log: Vec::new(),
    };
    run.order.shuffle(&mut run.rng);

    let mut kv_trained = false;
    if cfg.joint {
        let mut vars = vec![emb.clone()];
        let mut lrs = vec![cfg.phase1_lr];
        vars.extend(kv_vars());
        lrs.extend(std::iter::repeat_n(cfg.phase2_lr, kv.len() * 2));
        let mut opt = Adam::new(vars, lrs)?;
        run.iterate(0, cfg.phase1_iters + cfg.phase2_iters, &emb, &kv, true, &mut opt)?;
        kv_trained = cfg.phase1_iters + cfg.phase2_iters > 0;
    } else {
        let mut opt = Adam::new(vec![emb.clone()], vec![cfg.phase1_lr])?;
        run.iterate(1, cfg.phase1_iters, &emb, &kv, false, &mut opt)?;
        if cfg.phase2_iters > 0 {
            let mut vars = vec![emb.clone()];
            vars.extend(kv_vars());
            let n = vars.len();
            let mut opt = Adam::new(vars, vec![cfg.phase2_lr; n])?;
            run.iterate(2, cfg.phase2_iters, &emb, &kv, true, &mut opt)?;
            kv_trained = true;
        }
    }

    let cross_attention = if kv_trained {
        kv.iter()
            .map(|(k, v)| {
                Ok(CrossAttentionKv {
                    to_k: tensor_array2(k.as_tensor())?,
                    to_v: tensor_array2(v.as_tensor())?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        init.cross_attention.clone()
    };
    let state = SegModelState {
        text_embeddings: tensor_array2(emb.as_tensor())?,
        cross_attention,
        base_model_id: init.base_model_id,
        capture: init.capture,
    };
    Ok(TrainOutcome { state, log: run.log })
}

/// Loss components of a trained state averaged over `draws` fixed
/// (timestep, noise) samples per reference; no parameters change.
pub fn evaluate(
    refs: &[ReferenceExample],
    model: &MiniLdm,
    state: &SegModelState,
    cfg: &TrainConfig,
    draws: usize,
    seed: u64,
) -> Result<LossParts> {
    let k = check_k(refs)?;
    if k != state.num_segments() {
        return Err(TrainError::InconsistentK(format!(
            "references K = {k}, state K = {}",
            state.num_segments()
        )));
    }
    let (emb, kv) = model.state_tensors(state)?;
    let prepared = prepare(refs, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::new();
    for prep in &prepared {
        for _ in 0..draws {
            let t = rng.random_range(1..=cfg.max_train_timestep);
            let s = rng.next_u64();
            parts.push(reference_loss(model, cfg, prep, &emb, &kv, t, s)?.1);
        }
    }
    Ok(mean_parts(&parts))
}

/// Writes `iter,phase,loss_ce,loss_mse,loss_ldm,total`.
pub fn write_loss_csv(log: &[LossRecord], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "iter,phase,loss_ce,loss_mse,loss_ldm,total")?;
    for r in log {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.iter, r.phase, r.parts.ce, r.parts.mse, r.parts.ldm, r.parts.total
        )?;
    }
    w.flush()?;
    Ok(())
}
