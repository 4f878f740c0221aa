//! The dual-branch classifier: temporal and spatial branches, mean-pooled
//! and concatenated, then a two-layer ReLU head over two classes.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::block::{Init, InitScheme, ParamRegistry};
use crate::error::{Error, Result};
use crate::kernel::{self, Activation, NodeId, Tape, Tensor};
use crate::series::TimeSeriesMatrix;
use crate::spatial::{spatial_forward, SpatialOutput, SpatialParams};
use crate::temporal::{temporal_forward, BranchOptions, Extension, TemporalOutput, TemporalParams, WindowSchedule};

pub const CLASSES: usize = 2;

/// Architecture hyperparameters. Everything that determines parameter
/// shapes lives here, so two states with equal configs are interchangeable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_rois: usize,
    /// Time points per (cropped) input.
    pub seq_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub schedule: Vec<usize>,
    pub extension: Extension,
    pub ff_hidden: usize,
    pub spatial_depth: usize,
    /// Rows of the spatial positional table.
    pub max_rois: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Full-size geometry: 128 time points, 8 heads of 16 dims, the
    /// `{16, 8, 4, 4, 8, 16}` schedule and a 256-wide head.
    pub fn standard(n_rois: usize) -> Self {
        ModelConfig {
            n_rois,
            seq_len: 128,
            d_model: 128,
            heads: 8,
            schedule: WindowSchedule::DEFAULT.to_vec(),
            extension: Extension::Half,
            ff_hidden: 512,
            spatial_depth: 1,
            max_rois: n_rois.max(400),
            mlp_hidden: 256,
            dropout: 0.5,
        }
    }

    pub fn window_schedule(&self) -> Result<WindowSchedule> {
        WindowSchedule::new(self.schedule.clone(), self.seq_len)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::Config(format!("{what} must be positive")))
            } else {
                Ok(())
            }
        };
        pos(self.n_rois, "n_rois")?;
        pos(self.d_model, "d_model")?;
        pos(self.heads, "heads")?;
        pos(self.ff_hidden, "ff_hidden")?;
        pos(self.mlp_hidden, "mlp_hidden")?;
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_rois < self.n_rois {
            return Err(Error::Config(format!(
                "positional table of {} rows cannot hold {} ROIs",
                self.max_rois, self.n_rois
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let schedule = self.window_schedule()?;
        for l in 0..schedule.layers() {
            self.extension.len(schedule.window_len(l))?;
        }
        Ok(())
    }
}

/// Where each named parameter sits in the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelLayout {
    pub registry: ParamRegistry,
    pub temporal: TemporalParams,
    pub spatial: SpatialParams,
    pub head_hidden_weight: usize,
    pub head_hidden_bias: usize,
    pub head_out_weight: usize,
    pub head_out_bias: usize,
}

impl ModelLayout {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.window_schedule()?;
        let d = cfg.d_model;
        let mut reg = ParamRegistry::new();
        let temporal = TemporalParams::register(&mut reg, cfg.n_rois, d, cfg.heads, cfg.ff_hidden, &schedule, cfg.extension)?;
        let spatial = SpatialParams::register(&mut reg, cfg.seq_len, d, cfg.ff_hidden, cfg.max_rois, cfg.spatial_depth);
        let head_hidden_weight = reg.add("head.hidden.weight", &[2 * d, cfg.mlp_hidden], Init::FanIn(2 * d));
        let head_hidden_bias = reg.add("head.hidden.bias", &[cfg.mlp_hidden], Init::Zeros);
        let head_out_weight = reg.add("head.out.weight", &[cfg.mlp_hidden, CLASSES], Init::Output(cfg.mlp_hidden));
        let head_out_bias = reg.add("head.out.bias", &[CLASSES], Init::Zeros);
        Ok(ModelLayout {
            registry: reg,
            temporal,
            spatial,
            head_hidden_weight,
            head_hidden_bias,
            head_out_weight,
            head_out_bias,
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions<'a> {
    /// Enables dropout.
    pub training: bool,
    /// Values placed in padded temporal key/value rows instead of zeros.
    pub pad_fill: Option<&'a Tensor>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `[1, 2]`.
    pub logits: NodeId,
    /// `[1, 2d]`.
    pub fused: NodeId,
    /// Time-major input `[m, n]`.
    pub temporal_input: NodeId,
    pub temporal: TemporalOutput,
    pub spatial: SpatialOutput,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    layout: ModelLayout,
    params: Vec<Tensor>,
}

impl ModelState {
    pub fn init(config: ModelConfig, scheme: InitScheme, seed: u64) -> Result<Self> {
        Self::init_with_rng(config, scheme, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn init_with_rng<R: Rng + ?Sized>(config: ModelConfig, scheme: InitScheme, rng: &mut R) -> Result<Self> {
        let layout = ModelLayout::new(&config)?;
        let params = layout.registry.initialize(scheme, rng);
        Ok(ModelState { config, layout, params })
    }

    /// Rebuilds a state from stored tensors, checking shapes and finiteness.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        let layout = ModelLayout::new(&config)?;
        layout.registry.check(&params)?;
        if let Some(spec) = layout.registry.specs().iter().zip(&params).find(|(_, t)| !t.is_finite()).map(|(s, _)| s) {
            return Err(Error::Data(format!("parameter {} is not finite", spec.name)));
        }
        Ok(ModelState { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<Tensor> {
        self.params
    }

    pub fn param_names(&self) -> impl Iterator<Item = &String> {
        self.layout.registry.specs().iter().map(|s| &s.name)
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.layout.registry.specs().iter().position(|s| s.name == name)
    }

    /// Records the full forward pass of one subject on `tape`, which must
    /// have been created over this state's parameters.
    pub fn forward<'p, R: Rng + ?Sized>(
        &'p self,
        tape: &mut Tape<'p>,
        ts: &TimeSeriesMatrix,
        opts: &ForwardOptions<'_>,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        if ts.n() != cfg.n_rois || ts.m() != cfg.seq_len {
            return Err(Error::Config(format!(
                "input of {} ROIs x {} time points for a model of {} x {}",
                ts.n(),
                ts.m(),
                cfg.n_rois,
                cfg.seq_len
            )));
        }
        let branch = BranchOptions {
            heads: cfg.heads,
            dropout: if opts.training { cfg.dropout } else { 0.0 },
            pad_fill: opts.pad_fill,
        };
        let temporal_input = tape.leaf(ts.to_time_major(), false)?;
        let spatial_input = tape.leaf(ts.to_tensor(), false)?;
        let temporal = temporal_forward(tape, &self.layout.temporal, temporal_input, &branch, rng)?;
        let spatial = spatial_forward(tape, &self.layout.spatial, spatial_input, &branch, rng)?;
        let fused = fuse_features(tape, temporal.out, spatial.out)?;

        let l = &self.layout;
        let (w1, b1) = (tape.param(l.head_hidden_weight), tape.param(l.head_hidden_bias));
        let h = tape.linear(fused, w1, Some(b1))?;
        let h = tape.activation(h, Activation::Relu)?;
        let h = tape.dropout(h, branch.dropout, rng)?;
        let (w2, b2) = (tape.param(l.head_out_weight), tape.param(l.head_out_bias));
        let logits = tape.linear(h, w2, Some(b2))?;
        Ok(ForwardOutput {
            logits,
            fused,
            temporal_input,
            temporal,
            spatial,
        })
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, ts: &TimeSeriesMatrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        // Dropout is off in evaluation, so the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut tape, ts, &ForwardOptions::default(), &mut rng)?;
        Ok(tape.value(out.logits).data().to_vec())
    }

    /// Evaluation-mode probability of the positive class.
    pub fn predict_positive(&self, ts: &TimeSeriesMatrix) -> Result<f64> {
        let logits = self.logits(ts)?;
        let probs = kernel::softmax_rows(&Tensor::new(alloc::vec![1, CLASSES], logits)?);
        Ok(probs.data()[1])
    }
}

/// Mean-pools each branch over its tokens and concatenates: `[1, 2d]`.
pub fn fuse_features(tape: &mut Tape<'_>, temporal_out: NodeId, spatial_out: NodeId) -> Result<NodeId> {
    let t = tape.mean_rows(temporal_out)?;
    let s = tape.mean_rows(spatial_out)?;
    tape.concat_cols(t, s)
}
