//! Multi-head attention over groups of query rows and key rows.
//!
//! Queries are split into `windows` consecutive blocks of `query_len` rows;
//! keys and values into the same number of blocks of `key_len` rows. Block
//! `i` of the queries attends only to block `i` of the keys. Plain
//! self-attention is the single-window case with `query_len == key_len`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::ops::{dot, softmax_in_place};
use crate::error::{Error, Result};
use crate::math;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayout {
    pub windows: usize,
    pub query_len: usize,
    pub key_len: usize,
    pub heads: usize,
    /// Validity of each key row (`windows * key_len` entries). Invalid rows
    /// get zero weight and receive zero gradient. `None` means all valid.
    pub key_mask: Option<Vec<bool>>,
}

impl AttentionLayout {
    pub fn full(tokens: usize, heads: usize) -> Self {
        AttentionLayout {
            windows: 1,
            query_len: tokens,
            key_len: tokens,
            heads,
            key_mask: None,
        }
    }

    pub fn query_rows(&self) -> usize {
        self.windows * self.query_len
    }

    pub fn key_rows(&self) -> usize {
        self.windows * self.key_len
    }

    pub fn bias_shape(&self) -> [usize; 3] {
        [self.heads, self.query_len, self.key_len]
    }

    #[inline]
    fn key_valid(&self, row: usize) -> bool {
        self.key_mask.as_ref().map_or(true, |m| m[row])
    }

    pub(crate) fn check(&self, q_shape: &[usize], k_shape: &[usize], v_shape: &[usize], bias_shape: Option<&[usize]>) -> Result<usize> {
        let d = *q_shape.last().unwrap_or(&0);
        let rows = |s: &[usize]| s.iter().product::<usize>() / s.last().copied().unwrap_or(1).max(1);
        if self.heads == 0 || d % self.heads != 0 {
            return Err(Error::dim("attention", format!("width {d} not divisible by {} heads", self.heads)));
        }
        if rows(q_shape) != self.query_rows() {
            return Err(Error::dim("attention", format!("query rows {} != {}", rows(q_shape), self.query_rows())));
        }
        if k_shape != v_shape || rows(k_shape) != self.key_rows() || k_shape.last() != Some(&d) {
            return Err(Error::dim("attention", format!("key/value shapes {k_shape:?} / {v_shape:?} do not fit layout")));
        }
        if let Some(m) = &self.key_mask {
            if m.len() != self.key_rows() {
                return Err(Error::dim("attention", "key mask length"));
            }
            for w in 0..self.windows {
                if !m[w * self.key_len..(w + 1) * self.key_len].iter().any(|&v| v) {
                    return Err(Error::dim("attention", format!("window {w} has every key masked")));
                }
            }
        }
        if let Some(bs) = bias_shape {
            if bs != self.bias_shape() {
                return Err(Error::dim("attention", format!("bias shape {bs:?} != {:?}", self.bias_shape())));
            }
        }
        Ok(d)
    }
}

pub(crate) struct AttentionForward {
    pub out: Vec<f64>,
    /// `[window][head][query][key]`, zero at masked keys.
    pub probs: Vec<f64>,
    pub macs: u64,
}

pub(crate) fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    bias: Option<&[f64]>,
    layout: &AttentionLayout,
    d: usize,
) -> AttentionForward {
    let (ql, kl, heads) = (layout.query_len, layout.key_len, layout.heads);
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let mut out = vec![0.0; layout.query_rows() * d];
    let mut probs = vec![0.0; layout.windows * heads * ql * kl];
    let mut macs = 0u64;
    let mut scores = vec![0.0; kl];
    let mut valid: Vec<usize> = Vec::with_capacity(kl);

    for w in 0..layout.windows {
        valid.clear();
        valid.extend((0..kl).filter(|&b| layout.key_valid(w * kl + b)));
        for h in 0..heads {
            let col = h * dh;
            for a in 0..ql {
                let qrow = &q[(w * ql + a) * d + col..][..dh];
                let s = &mut scores[..valid.len()];
                for (sv, &b) in s.iter_mut().zip(&valid) {
                    let krow = &k[(w * kl + b) * d + col..][..dh];
                    *sv = dot(qrow, krow) * scale;
                    if let Some(bias) = bias {
                        *sv += bias[(h * ql + a) * kl + b];
                    }
                }
                softmax_in_place(s);
                let prow = &mut probs[((w * heads + h) * ql + a) * kl..][..kl];
                let orow = &mut out[(w * ql + a) * d + col..][..dh];
                for (&p, &b) in s.iter().zip(&valid) {
                    prow[b] = p;
                    let vrow = &v[(w * kl + b) * d + col..][..dh];
                    for (o, &vv) in orow.iter_mut().zip(vrow) {
                        *o += p * vv;
                    }
                }
                macs += 2 * (valid.len() * dh) as u64;
            }
        }
    }
    AttentionForward { out, probs, macs }
}

pub(crate) struct AttentionGrads<'a> {
    pub dq: Option<&'a mut [f64]>,
    pub dk: Option<&'a mut [f64]>,
    pub dv: Option<&'a mut [f64]>,
    pub dbias: Option<&'a mut [f64]>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    dout: &[f64],
    layout: &AttentionLayout,
    d: usize,
    mut grads: AttentionGrads<'_>,
) {
    let (ql, kl, heads) = (layout.query_len, layout.key_len, layout.heads);
    let dh = d / heads;
    let scale = 1.0 / math::sqrt(dh as f64);
    let mut ds = vec![0.0; kl];
    let mut valid: Vec<usize> = Vec::with_capacity(kl);

    for w in 0..layout.windows {
        valid.clear();
        valid.extend((0..kl).filter(|&b| layout.key_valid(w * kl + b)));
        for h in 0..heads {
            let col = h * dh;
            for a in 0..ql {
                let qi = (w * ql + a) * d + col;
                let prow = &probs[((w * heads + h) * ql + a) * kl..][..kl];
                let dorow = &dout[qi..][..dh];
                let mut weighted = 0.0;
                for &b in &valid {
                    let vrow = &v[(w * kl + b) * d + col..][..dh];
                    let dp = dot(dorow, vrow);
                    ds[b] = dp;
                    weighted += prow[b] * dp;
                    if let Some(dv) = grads.dv.as_deref_mut() {
                        let p = prow[b];
                        for (g, &o) in dv[(w * kl + b) * d + col..][..dh].iter_mut().zip(dorow) {
                            *g += p * o;
                        }
                    }
                }
                for &b in &valid {
                    ds[b] = prow[b] * (ds[b] - weighted);
                }
                if let Some(db) = grads.dbias.as_deref_mut() {
                    let row = &mut db[(h * ql + a) * kl..][..kl];
                    for &b in &valid {
                        row[b] += ds[b];
                    }
                }
                if let Some(dq) = grads.dq.as_deref_mut() {
                    let dqrow = &mut dq[qi..][..dh];
                    for &b in &valid {
                        let c = ds[b] * scale;
                        let krow = &k[(w * kl + b) * d + col..][..dh];
                        for (g, &kv) in dqrow.iter_mut().zip(krow) {
                            *g += c * kv;
                        }
                    }
                }
                if let Some(dk) = grads.dk.as_deref_mut() {
                    let qrow = &q[qi..][..dh];
                    for &b in &valid {
                        let c = ds[b] * scale;
                        for (g, &qv) in dk[(w * kl + b) * d + col..][..dh].iter_mut().zip(qrow) {
                            *g += c * qv;
                        }
                    }
                }
            }
        }
    }
}
