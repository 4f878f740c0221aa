use alloc::format;

use serde::{Deserialize, Serialize};

use crate::block::InitScheme;
use crate::error::{Error, Result};
use crate::math;

/// Optimisation settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clamped to the training-set size.
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_max: f64,
    pub lr_final: f64,
    /// Fraction of all steps spent warming up from `lr_init` to `lr_max`.
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Time points per training crop.
    pub crop_len: usize,
    pub seed: u64,
    /// Stop a fold after this many epochs without a validation improvement.
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default)]
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr_init: 5e-5,
            lr_max: 1e-4,
            lr_final: 1e-5,
            warmup_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            crop_len: 128,
            seed: 0,
            patience: None,
            init: InitScheme::Standard,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.crop_len == 0 {
            return Err(Error::Config("epochs, batch_size and crop_len must be positive".into()));
        }
        let lrs = [self.lr_init, self.lr_max, self.lr_final];
        if lrs.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("learning rates {lrs:?} must be positive")));
        }
        if self.lr_init > self.lr_max || self.lr_final > self.lr_init {
            return Err(Error::Config(format!(
                "learning rates must satisfy lr_final <= lr_init <= lr_max, got {lrs:?}"
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!("warmup_fraction {} outside [0, 1)", self.warmup_fraction)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam coefficients out of range".into()));
        }
        Ok(())
    }
}

/// Linear warmup from `lr_init` to `lr_max` over the first
/// `warmup_fraction` of the steps, then cosine decay to `lr_final`.
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> f64 {
    if total_steps == 0 {
        return cfg.lr_init;
    }
    let step = step.min(total_steps) as f64;
    let total = total_steps as f64;
    let warm = cfg.warmup_fraction * total;
    if step <= warm {
        if warm == 0.0 {
            return cfg.lr_max;
        }
        return cfg.lr_init + (cfg.lr_max - cfg.lr_init) * step / warm;
    }
    let progress = (step - warm) / (total - warm);
    cfg.lr_final + (cfg.lr_max - cfg.lr_final) * 0.5 * (1.0 + math::cos(core::f64::consts::PI * progress))
}
