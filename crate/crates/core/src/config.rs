//! Guidance configuration stored as a flat `key = value` file whose keys are
//! the field names below.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Object category presets for the tracking weight and voting window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Horses,
    Faces,
    Cars,
    Other,
}

impl std::str::FromStr for Category {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "horse" | "horses" => Ok(Self::Horses),
            "face" | "faces" => Ok(Self::Faces),
            "car" | "cars" => Ok(Self::Cars),
            "other" | "non-text" => Ok(Self::Other),
            other => Err(CoreError::InvalidConfig(format!("unknown category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub lambda_tracking: f64,
    pub lambda_reg: f64,
    pub dct_threshold: f64,
    /// Odd temporal voting window length.
    pub window_size: usize,
    /// Forward-noising depth in schedule timesteps.
    pub noise_timesteps: usize,
    pub guidance_iters_per_step: usize,
    /// Denoising steps between `noise_timesteps` and the clean latent.
    pub denoising_steps: usize,
    /// Per-step latent learning rates; a single entry is used for every step.
    pub lr_schedule: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Frame distance between consecutive voting window centers.
    pub vote_stride: usize,
    /// Use soft voted distributions as cross-entropy targets instead of argmax.
    pub soft_targets: bool,
    /// Frames per gradient window; 0 differentiates the whole clip at once.
    pub grad_window: usize,
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda_tracking: 1.0,
            lambda_reg: 1.0,
            dct_threshold: 0.4,
            window_size: 15,
            noise_timesteps: 100,
            guidance_iters_per_step: 15,
            denoising_steps: 5,
            lr_schedule: vec![0.05],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            vote_stride: 1,
            soft_targets: false,
            grad_window: 0,
            seed: 0,
        }
    }
}

impl GuidanceConfig {
    pub const FIELDS: &'static [&'static str] = &[
        "lambda_tracking",
        "lambda_reg",
        "dct_threshold",
        "window_size",
        "noise_timesteps",
        "guidance_iters_per_step",
        "denoising_steps",
        "lr_schedule",
        "beta1",
        "beta2",
        "epsilon",
        "vote_stride",
        "soft_targets",
        "grad_window",
        "seed",
    ];

    pub fn for_category(category: Category) -> Self {
        let (lambda_tracking, window_size) = match category {
            Category::Horses => (1.0, 7),
            Category::Faces => (0.5, 15),
            Category::Cars => (0.2, 15),
            Category::Other => (1.0, 15),
        };
        Self {
            lambda_tracking,
            window_size,
            ..Self::default()
        }
    }

    /// True when the run performs any latent optimization.
    pub fn guidance_enabled(&self) -> bool {
        self.guidance_iters_per_step > 0 && (self.lambda_tracking > 0.0 || self.lambda_reg > 0.0)
    }

    pub fn learning_rate(&self, step: usize) -> f64 {
        match self.lr_schedule.as_slice() {
            [single] => *single,
            rates => rates[step.min(rates.len() - 1)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::InvalidConfig(msg));
        if !(self.lambda_tracking >= 0.0 && self.lambda_tracking.is_finite()) {
            return bad(format!("lambda_tracking must be >= 0, got {}", self.lambda_tracking));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return bad(format!("lambda_reg must be >= 0, got {}", self.lambda_reg));
        }
        if !(self.dct_threshold > 0.0 && self.dct_threshold <= 1.0) {
            return bad(format!("dct_threshold must lie in (0, 1], got {}", self.dct_threshold));
        }
        if self.window_size < 3 || self.window_size % 2 == 0 {
            return bad(format!("window_size must be odd and >= 3, got {}", self.window_size));
        }
        if self.denoising_steps == 0 {
            return bad("denoising_steps must be >= 1".into());
        }
        if self.lr_schedule.is_empty() || self.lr_schedule.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("lr_schedule must hold positive rates".into());
        }
        if self.lr_schedule.len() > 1 && self.lr_schedule.len() != self.denoising_steps {
            return bad(format!(
                "lr_schedule has {} entries for {} denoising steps",
                self.lr_schedule.len(),
                self.denoising_steps
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if self.vote_stride == 0 {
            return bad("vote_stride must be >= 1".into());
        }
        Ok(())
    }

    /// Parses the flat key-value format, rejecting unknown keys.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
        reject_unknown(&table, &[Self::FIELDS])?;
        Self::from_table(&table)
    }

    /// Picks this struct's keys out of `table`, ignoring any others.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let known: toml::Table = table
            .iter()
            .filter(|(k, _)| Self::FIELDS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let cfg: Self = known
            .try_into()
            .map_err(|e: toml::de::Error| CoreError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}

/// Errors on keys that belong to none of `field_sets`.
pub fn reject_unknown(table: &toml::Table, field_sets: &[&[&str]]) -> Result<()> {
    for key in table.keys() {
        if !field_sets.iter().any(|set| set.contains(&key.as_str())) {
            return Err(CoreError::InvalidConfig(format!("unknown key `{key}`")));
        }
    }
    Ok(())
}

pub fn read_table(path: &Path) -> Result<toml::Table> {
    toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| CoreError::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = GuidanceConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.noise_timesteps, 100);
        assert_eq!(cfg.guidance_iters_per_step, 15);
        assert_eq!(cfg.dct_threshold, 0.4);
    }

    #[test]
    fn category_presets() {
        let horses = GuidanceConfig::for_category(Category::Horses);
        assert_eq!((horses.lambda_tracking, horses.window_size), (1.0, 7));
        let faces = GuidanceConfig::for_category(Category::Faces);
        assert_eq!((faces.lambda_tracking, faces.window_size), (0.5, 15));
    }

    #[test]
    fn kv_roundtrip() {
        let cfg = GuidanceConfig {
            lambda_tracking: 0.1 + 0.2,
            lr_schedule: vec![0.05, 0.04, 0.03, 0.02, 0.01],
            seed: 77,
            ..GuidanceConfig::default()
        };
        let text = cfg.to_kv_string();
        assert!(text.contains("lambda_tracking = "));
        assert_eq!(GuidanceConfig::from_kv_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = GuidanceConfig::from_kv_str("window_size = 7\nlambda_reg = 0.25\n").unwrap();
        assert_eq!(cfg.window_size, 7);
        assert_eq!(cfg.lambda_reg, 0.25);
        assert_eq!(cfg.beta2, 0.999);
    }

    #[test]
    fn rejects_even_window_and_unknown_keys() {
        assert!(GuidanceConfig::from_kv_str("window_size = 8").is_err());
        assert!(GuidanceConfig::from_kv_str("lambda_trackin = 1.0").is_err());
        assert!(GuidanceConfig::from_kv_str("dct_threshold = 0.0").is_err());
    }

    #[test]
    fn per_step_rates() {
        let cfg = GuidanceConfig {
            denoising_steps: 3,
            lr_schedule: vec![0.3, 0.2, 0.1],
            ..GuidanceConfig::default()
        };
        cfg.validate().unwrap();
        assert_eq!(cfg.learning_rate(1), 0.2);
        assert_eq!(GuidanceConfig::default().learning_rate(4), 0.05);
    }
}
