//! Attention-based ROI importance.
//!
//! Temporal branch: per-layer attention (heads averaged) is mapped back to
//! time points, averaged over layers, and summed over queries to give the
//! attention each time point receives. That is weighted by the L2 norm of
//! the time point's branch output and distributed over ROIs in proportion
//! to `|x[t, r]| * ||W_embed[r, :]||`, each ROI's share of the embedded
//! token.
//!
//! Spatial branch: attention (heads and blocks averaged) with each key
//! column weighted by the L2 norm of that ROI's branch output, summed over
//! each ROI's row.
//!
//! Both vectors are normalised to sum to one per subject, averaged over the
//! batch, and combined as a weighted sum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{NodeId, Tape, Tensor};
use crate::math;
use crate::model::{ForwardOptions, ModelState};
use crate::series::TimeSeriesMatrix;

pub const DEFAULT_TEMPORAL_WEIGHT: f64 = 0.5;

/// Scores per input row (ROI in model order), each vector summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub temporal: Vec<f64>,
    pub spatial: Vec<f64>,
    pub combined: Vec<f64>,
    pub temporal_weight: f64,
}

impl ImportanceScores {
    /// Indices of the `ceil(fraction * n)` highest combined scores (at least
    /// one), highest first, ties to the lower index.
    pub fn top_k(&self, fraction: f64) -> Result<Vec<usize>> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("top fraction {fraction} outside (0, 1]")));
        }
        let n = self.combined.len();
        let k = (math::ceil(fraction * n as f64 - 1e-9) as usize).clamp(1, n);
        Ok(self.ranking().into_iter().take(k).collect())
    }

    /// All indices by descending combined score, ties to the lower index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.combined.len()).collect();
        idx.sort_by(|&a, &b| self.combined[b].total_cmp(&self.combined[a]).then(a.cmp(&b)));
        idx
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    (0..t.rows()).map(|r| math::sqrt(t.row(r).iter().map(|v| v * v).sum())).collect()
}

/// Attention received by every time point, averaged over heads and layers
/// and summed over queries.
fn temporal_received(tape: &Tape<'_>, layers: &[NodeId], m: usize) -> Result<Vec<f64>> {
    let mut received = vec![0.0; m];
    for &node in layers {
        let (probs, layout) = tape
            .attention_probs(node)
            .ok_or_else(|| Error::Contract("node is not an attention node".into()))?;
        let (ql, kl, heads) = (layout.query_len, layout.key_len, layout.heads);
        let scale = 1.0 / (heads * layers.len()) as f64;
        let mask = layout.key_mask.as_deref();
        for w in 0..layout.windows {
            // Valid extended positions are consecutive time points, starting
            // at the window start minus the leading context.
            let ctx = (kl - ql) / 2;
            for b in 0..kl {
                if mask.is_some_and(|mk| !mk[w * kl + b]) {
                    continue;
                }
                let t = (w * ql + b) as isize - ctx as isize;
                if t < 0 || t as usize >= m {
                    return Err(Error::Contract("attention layout does not match the sequence".into()));
                }
                let mut col = 0.0;
                for h in 0..heads {
                    let base = (w * heads + h) * ql * kl;
                    col += (0..ql).map(|a| probs[base + a * kl + b]).sum::<f64>();
                }
                received[t as usize] += col * scale;
            }
        }
    }
    Ok(received)
}

fn subject_scores(state: &ModelState, ts: &TimeSeriesMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = ts.n();
    let m = ts.m();
    let mut tape = Tape::new(state.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = state.forward(&mut tape, ts, &ForwardOptions::default(), &mut rng)?;

    let received = temporal_received(&tape, &out.temporal.attention, m)?;
    let activation = row_norms(tape.value(out.temporal.out));
    let embed = &state.params()[state.layout().temporal.embed_weight];
    let embed_norms = row_norms(embed);
    let x = tape.value(out.temporal_input);
    let mut temporal = vec![0.0; n];
    let mut share = vec![0.0; n];
    for t in 0..m {
        let tau = received[t] * activation[t];
        for r in 0..n {
            share[r] = x.at(t, r).abs() * embed_norms[r];
        }
        normalize(&mut share);
        for r in 0..n {
            temporal[r] += tau * share[r];
        }
    }
    normalize(&mut temporal);

    let act = row_norms(tape.value(out.spatial.out));
    let mut spatial = vec![0.0; n];
    let blocks = out.spatial.attention.len();
    for &node in &out.spatial.attention {
        let (probs, layout) = tape
            .attention_probs(node)
            .ok_or_else(|| Error::Contract("node is not an attention node".into()))?;
        let heads = layout.heads;
        let scale = 1.0 / (heads * blocks) as f64;
        for h in 0..heads {
            for (r, s) in spatial.iter_mut().enumerate() {
                let row = &probs[(h * n + r) * n..][..n];
                *s += scale * row.iter().zip(&act).map(|(p, a)| p * a).sum::<f64>();
            }
        }
    }
    normalize(&mut spatial);
    Ok((temporal, spatial))
}

/// Scores for a batch of inputs already cropped to the model length and in
/// model ROI order.
pub fn importance_scores(state: &ModelState, batch: &[&TimeSeriesMatrix], temporal_weight: f64) -> Result<ImportanceScores> {
    if batch.is_empty() {
        return Err(Error::Contract("importance needs at least one subject".into()));
    }
    if !(0.0..=1.0).contains(&temporal_weight) {
        return Err(Error::Config(format!("temporal weight {temporal_weight} outside [0, 1]")));
    }
    let n = state.config().n_rois;
    let mut temporal = vec![0.0; n];
    let mut spatial = vec![0.0; n];
    for ts in batch {
        let (t, s) = subject_scores(state, ts)?;
        temporal.iter_mut().zip(&t).for_each(|(a, b)| *a += b);
        spatial.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
    }
    normalize(&mut temporal);
    normalize(&mut spatial);
    let mut combined: Vec<f64> = temporal
        .iter()
        .zip(&spatial)
        .map(|(t, s)| temporal_weight * t + (1.0 - temporal_weight) * s)
        .collect();
    normalize(&mut combined);
    Ok(ImportanceScores {
        temporal,
        spatial,
        combined,
        temporal_weight,
    })
}
