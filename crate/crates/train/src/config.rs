use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub phase1_iters: usize,
    pub phase1_lr: f64,
    pub phase2_iters: usize,
    pub phase2_lr: f64,
    pub alpha_mse: f64,
    pub beta_ldm: f64,
    /// References per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    /// Training timesteps are drawn uniformly from `1..=max_train_timestep`.
    pub max_train_timestep: usize,
    /// Optimize embeddings and key/value projections together from the
    /// first iteration (ablation only).
    pub joint: bool,
    /// Optional segment names (background first) used to initialize embeddings.
    pub segment_names: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            phase1_iters: 100,
            phase1_lr: 0.1,
            phase2_iters: 200,
            phase2_lr: 1e-4,
            alpha_mse: 1.0,
            beta_ldm: 0.05,
            batch_size: 1,
            seed: 0,
            max_train_timestep: 1000,
            joint: false,
            segment_names: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub const FIELDS: &'static [&'static str] = &[
        "phase1_iters",
        "phase1_lr",
        "phase2_iters",
        "phase2_lr",
        "alpha_mse",
        "beta_ldm",
        "batch_size",
        "seed",
        "max_train_timestep",
        "joint",
        "segment_names",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.phase1_lr > 0.0) || !(self.phase2_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.phase2_lr >= self.phase1_lr {
            return bad("phase2_lr must be lower than phase1_lr");
        }
        if !(self.alpha_mse >= 0.0) || !(self.beta_ldm >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.max_train_timestep == 0 {
            return bad("max_train_timestep must be >= 1");
        }
        Ok(())
    }

    /// Picks this struct's keys out of a flat table, ignoring others.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let known: toml::Table = table
            .iter()
            .filter(|(k, _)| Self::FIELDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let cfg: Self = known
            .try_into()
            .map_err(|e: toml::de::Error| TrainError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let table = smite_core::config::read_table(path)?;
        smite_core::config::reject_unknown(&table, &[Self::FIELDS, smite_core::GuidanceConfig::FIELDS])?;
        Self::from_table(&table)
    }
}
