use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{lr_at, TrainConfig};
use super::split::{center_crop, crop_time_series};
use crate::error::{Error, Result};
use crate::kernel::Tape;
use crate::math;
use crate::model::{ForwardOptions, ModelConfig, ModelState};
use crate::series::TimeSeriesMatrix;

/// One labelled subject, ROI rows already in model order.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub series: &'a TimeSeriesMatrix,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct FoldFit {
    /// Parameters from the epoch with the best validation accuracy, ties
    /// going to the lower validation loss.
    pub state: ModelState,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Loss of the very first mini-batch, before any update.
    pub first_batch_loss: f64,
}

/// Generator for fold `fold` of a run seeded with `seed`: one ChaCha stream
/// per fold, so folds are independent of each other and of scheduling.
pub fn fold_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold as u64 + 1);
    rng
}

/// Evaluation-mode positive-class probabilities on centred crops.
pub fn predict_scores(state: &ModelState, series: &[&TimeSeriesMatrix]) -> Result<Vec<f64>> {
    let m = state.config().seq_len;
    series
        .iter()
        .map(|ts| {
            if ts.m() == m {
                state.predict_positive(ts)
            } else {
                state.predict_positive(&center_crop(ts, m)?)
            }
        })
        .collect()
}

/// Accuracy and mean cross-entropy.
fn validate(state: &ModelState, examples: &[Example<'_>]) -> Result<(f64, f64)> {
    let series: Vec<&TimeSeriesMatrix> = examples.iter().map(|e| e.series).collect();
    let scores = predict_scores(state, &series)?;
    let mut hits = 0;
    let mut loss = 0.0;
    for (&s, e) in scores.iter().zip(examples) {
        if (s >= super::metrics::DECISION_THRESHOLD) == (e.label == 1) {
            hits += 1;
        }
        let p = if e.label == 1 { s } else { 1.0 - s };
        loss -= math::ln(p.max(f64::MIN_POSITIVE));
    }
    let n = examples.len() as f64;
    Ok((hits as f64 / n, loss / n))
}

/// Trains a freshly initialised model with Adam on cross-entropy, keeping
/// the parameters of the epoch with the highest validation accuracy.
pub fn train_fold(
    model: &ModelConfig,
    cfg: &TrainConfig,
    fold: usize,
    train: &[Example<'_>],
    val: &[Example<'_>],
) -> Result<FoldFit> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Contract("training and validation sets must be non-empty".into()));
    }
    if cfg.crop_len != model.seq_len {
        return Err(Error::Config(format!(
            "crop length {} differs from the model sequence length {}",
            cfg.crop_len, model.seq_len
        )));
    }
    if let Some(e) = train.iter().chain(val).find(|e| e.label > 1) {
        return Err(Error::Data(format!("label {} is not binary", e.label)));
    }
    let mut rng = fold_rng(cfg.seed, fold);
    let mut state = ModelState::init_with_rng(model.clone(), cfg.init, &mut rng)?;
    let mut adam = Adam::new(state.params(), cfg.beta1, cfg.beta2, cfg.epsilon);

    let batch = cfg.batch_size.min(train.len());
    let steps_per_epoch = train.len().div_ceil(batch);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads: Vec<Vec<f64>> = state.params().iter().map(|p| alloc::vec![0.0; p.numel()]).collect();

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, f64, ModelState)> = None;
    let mut last_improvement = 0;
    let mut first_batch_loss = None;
    let mut step = 0;
    let diverged = |epoch: usize, detail: &dyn core::fmt::Display| Error::Divergence {
        fold,
        epoch,
        detail: detail.to_string(),
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &train[i];
                let crop = crop_time_series(ex.series, cfg.crop_len, &mut rng)?;
                let mut tape = Tape::new(state.params());
                let opts = ForwardOptions {
                    training: true,
                    pad_fill: None,
                };
                let out = state
                    .forward(&mut tape, &crop, &opts, &mut rng)
                    .map_err(|e| numeric_or(e, |e| diverged(epoch, &e)))?;
                let loss = tape
                    .cross_entropy(out.logits, ex.label)
                    .map_err(|e| numeric_or(e, |e| diverged(epoch, &e)))?;
                batch_loss += tape.value(loss).data()[0];
                let g = tape.backward(loss)?;
                for (p, acc) in grads.iter_mut().enumerate() {
                    if let Some(gp) = g.param(p) {
                        for (a, v) in acc.iter_mut().zip(gp) {
                            *a += scale * v;
                        }
                    }
                }
            }
            if !batch_loss.is_finite() || grads.iter().flatten().any(|v| !v.is_finite()) {
                return Err(diverged(epoch, &"non-finite loss or gradient"));
            }
            first_batch_loss.get_or_insert(batch_loss * scale);
            epoch_loss += batch_loss;
            adam.step(state.params_mut(), &grads, lr_at(step, total_steps, cfg))?;
            step += 1;
        }
        if state.params().iter().any(|p| !p.is_finite()) {
            return Err(diverged(epoch, &"parameters became non-finite"));
        }
        let (val_acc, val_loss) = validate(&state, val)?;
        curve.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_acc,
            val_loss,
        });
        let (improved, better) = match &best {
            None => (true, true),
            Some((_, acc, loss, _)) => (val_acc > *acc, val_acc > *acc || (val_acc == *acc && val_loss < *loss)),
        };
        if improved {
            last_improvement = epoch;
        }
        if better {
            best = Some((epoch, val_acc, val_loss, state.clone()));
        }
        if cfg.patience.is_some_and(|p| epoch - last_improvement >= p) {
            break;
        }
    }
    let (best_epoch, best_val_acc, _, state) = best.expect("at least one epoch ran");
    Ok(FoldFit {
        state,
        curve,
        best_epoch,
        best_val_acc,
        first_batch_loss: first_batch_loss.unwrap_or(f64::NAN),
    })
}

fn numeric_or(e: Error, f: impl FnOnce(Error) -> Error) -> Error {
    match e {
        Error::NonFinite { .. } => f(e),
        other => other,
    }
}
