//! Naive reference implementations for the network tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use starformer_core::kernel::Tensor;
use starformer_core::TimeSeriesMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_series(n: usize, m: usize, rng: &mut ChaCha8Rng) -> TimeSeriesMatrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    TimeSeriesMatrix::from_rows(&rows).unwrap()
}

/// Row-major `x W + b` with a plain triple loop.
pub fn affine(x: &[Vec<f64>], w: &Tensor, b: &Tensor) -> Vec<Vec<f64>> {
    let (inner, cols) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|row| {
            (0..cols)
                .map(|j| b.data()[j] + (0..inner).map(|i| row[i] * w.data()[i * cols + j]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub struct AttnWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a Tensor,
    pub wk: &'a Tensor,
    pub bk: &'a Tensor,
    pub wv: &'a Tensor,
    pub bv: &'a Tensor,
    pub wo: &'a Tensor,
    pub bo: &'a Tensor,
}

/// Multi-head attention of `queries` over `keys` with explicit exponentials,
/// then the output projection.
pub fn naive_attention(queries: &[Vec<f64>], keys: &[Vec<f64>], p: &AttnWeights<'_>, heads: usize) -> Vec<Vec<f64>> {
    let q = affine(queries, p.wq, p.bq);
    let k = affine(keys, p.wk, p.bk);
    let v = affine(keys, p.wv, p.bv);
    let d = q[0].len();
    let dh = d / heads;
    let mut concat = vec![vec![0.0; d]; q.len()];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for (a, qa) in q.iter().enumerate() {
            let scores: Vec<f64> = k
                .iter()
                .map(|kb| cols.clone().map(|c| qa[c] * kb[c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in cols.clone() {
                concat[a][c] = e.iter().zip(&v).map(|(w, vb)| w / z * vb[c]).sum();
            }
        }
    }
    affine(&concat, p.wo, p.bo)
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Relative error with an absolute floor for tiny gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}
