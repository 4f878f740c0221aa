//! Run configuration. A config file names a profile and overrides any subset
//! of its fields:
//!
//! ```json
//! { "profile": "synthetic", "seed": 7, "model": { "schedule": [8, 4, 4, 8] } }
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use starformer_core::block::InitScheme;
use starformer_core::model::ModelConfig;
use starformer_core::temporal::{Extension, WindowSchedule};
use starformer_core::train::{TrainConfig, DEFAULT_FOLDS, DEFAULT_TEMPORAL_WEIGHT};

use crate::error::{Error, Result};
use crate::formats::read_config_json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Abide,
    Adhd200,
    Synthetic,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_owned()))
            .map_err(|_| Error::Usage(format!("unknown profile {s:?}; expected abide, adhd200 or synthetic")))
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Abide => "abide",
            Profile::Adhd200 => "adhd200",
            Profile::Synthetic => "synthetic",
        })
    }
}

/// Model geometry; the ROI count comes from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub schedule: Vec<usize>,
    pub extension: Extension,
    pub ff_hidden: usize,
    pub spatial_depth: usize,
    /// Positional table rows; the ROI count when absent.
    pub max_rois: Option<usize>,
    pub mlp_hidden: usize,
    pub dropout: f64,
}

impl ModelSection {
    pub fn build(&self, n_rois: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            n_rois,
            seq_len: self.seq_len,
            d_model: self.d_model,
            heads: self.heads,
            schedule: self.schedule.clone(),
            extension: self.extension,
            ff_hidden: self.ff_hidden,
            spatial_depth: self.spatial_depth,
            max_rois: self.max_rois.unwrap_or(n_rois),
            mlp_hidden: self.mlp_hidden,
            dropout: self.dropout,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_max: f64,
    pub lr_final: f64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: Option<usize>,
    pub init: InitScheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectivitySection {
    pub lag: usize,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    /// Network-grouped centrality ordering from sampled training patients.
    Ec,
    /// A seeded random permutation per fold.
    Random,
    Identity,
}

impl FromStr for OrderingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(Value::String(s.to_owned()))
            .map_err(|_| Error::Usage(format!("unknown ordering mode {s:?}; expected ec, random or identity")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingSection {
    pub mode: OrderingMode,
    /// Fraction of training patients whose centrality is averaged.
    pub subsample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: Profile,
    /// Root seed for splits, initialisation, crops, dropout and sampling.
    pub seed: u64,
    pub folds: usize,
    pub model: ModelSection,
    pub train: TrainSection,
    pub connectivity: ConnectivitySection,
    pub ordering: OrderingSection,
    pub temporal_weight: f64,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        let full_model = ModelSection {
            seq_len: 128,
            d_model: 128,
            heads: 8,
            schedule: WindowSchedule::DEFAULT.to_vec(),
            extension: Extension::Half,
            ff_hidden: 512,
            spatial_depth: 1,
            max_rois: Some(400),
            mlp_hidden: 256,
            dropout: 0.5,
        };
        let paper_train = |lr_init, lr_max, lr_final| TrainSection {
            epochs: 100,
            batch_size: 128,
            lr_init,
            lr_max,
            lr_final,
            warmup_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: None,
            init: InitScheme::Standard,
        };
        let (model, train) = match profile {
            Profile::Abide => (full_model, paper_train(5e-5, 1e-4, 1e-5)),
            Profile::Adhd200 => (full_model, paper_train(1e-5, 5e-5, 1e-6)),
            Profile::Synthetic => (
                ModelSection {
                    seq_len: 128,
                    d_model: 16,
                    heads: 4,
                    schedule: WindowSchedule::DEFAULT.to_vec(),
                    extension: Extension::Half,
                    ff_hidden: 32,
                    spatial_depth: 1,
                    max_rois: None,
                    mlp_hidden: 32,
                    dropout: 0.1,
                },
                TrainSection {
                    epochs: 50,
                    batch_size: 16,
                    lr_init: 5e-4,
                    lr_max: 2e-3,
                    lr_final: 1e-4,
                    warmup_fraction: 0.1,
                    beta1: 0.9,
                    beta2: 0.999,
                    epsilon: 1e-8,
                    patience: Some(6),
                    init: InitScheme::Standard,
                },
            ),
        };
        RunConfig {
            profile,
            seed: 0,
            folds: DEFAULT_FOLDS,
            model,
            train,
            connectivity: ConnectivitySection { lag: 1, alpha: 0.05 },
            ordering: OrderingSection {
                mode: OrderingMode::Ec,
                subsample: 0.10,
            },
            temporal_weight: DEFAULT_TEMPORAL_WEIGHT,
        }
    }

    /// Applies the overrides in `value` (an object naming a `profile`) to
    /// that profile's defaults.
    pub fn from_value(value: Value) -> std::result::Result<Self, String> {
        let Value::Object(obj) = &value else {
            return Err("config must be a JSON object".into());
        };
        let profile: Profile = match obj.get("profile") {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| format!("profile: {e}"))?,
            None => return Err("missing field `profile`".into()),
        };
        let mut merged = serde_json::to_value(RunConfig::profile(profile)).expect("serialisable config");
        merge(&mut merged, value);
        let cfg: RunConfig = serde_json::from_value(merged).map_err(|e| e.to_string())?;
        cfg.check().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let value: Value = read_config_json(path)?;
        Self::from_value(value).map_err(|detail| Error::ConfigFile {
            path: path.to_path_buf(),
            detail,
        })
    }

    /// Validates everything that does not depend on the data.
    pub fn check(&self) -> Result<()> {
        let cfg_err = |d: String| Error::Core(starformer_core::Error::Config(d));
        if self.folds < 3 {
            return Err(cfg_err(format!("folds must be at least 3, got {}", self.folds)));
        }
        if !(self.ordering.subsample > 0.0 && self.ordering.subsample <= 1.0) {
            return Err(cfg_err(format!("subsample {} outside (0, 1]", self.ordering.subsample)));
        }
        if !(0.0..=1.0).contains(&self.temporal_weight) {
            return Err(cfg_err(format!("temporal_weight {} outside [0, 1]", self.temporal_weight)));
        }
        if !(self.connectivity.alpha > 0.0 && self.connectivity.alpha < 1.0) || self.connectivity.lag == 0 {
            return Err(cfg_err("connectivity needs lag >= 1 and alpha in (0, 1)".into()));
        }
        self.model.build(self.model.max_rois.unwrap_or(1).max(1))?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn model_config(&self, n_rois: usize) -> Result<ModelConfig> {
        self.model.build(n_rois)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr_init: t.lr_init,
            lr_max: t.lr_max,
            lr_final: t.lr_final,
            warmup_fraction: t.warmup_fraction,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            crop_len: self.model.seq_len,
            seed: self.seed,
            patience: t.patience,
            init: t.init,
        }
    }
}

fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
