#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use starformer_core::TimeSeriesMatrix;

/// x(t) = A x(t-1) + e(t), e ~ N(0, sigma^2), with `burn_in` steps dropped.
pub fn simulate_var1(coef: &[f64], n: usize, m: usize, sigma: f64, seed: u64, burn_in: usize) -> TimeSeriesMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
    let mut x = vec![0.0; n];
    let mut rows = vec![Vec::with_capacity(m); n];
    for t in 0..burn_in + m {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut s: f64 = (0..n).map(|j| coef[i * n + j] * x[j]).sum();
            if sigma > 0.0 {
                s += noise.sample(&mut rng);
            }
            next[i] = s;
        }
        x = next;
        if t >= burn_in {
            for i in 0..n {
                rows[i].push(x[i]);
            }
        }
    }
    TimeSeriesMatrix::from_rows(&rows).unwrap()
}

/// Least squares by SVD on an explicit design with intercept.
pub fn lstsq_rss(target: &[f64], predictors: &[&[f64]], lag: usize) -> (Vec<f64>, f64) {
    let m = target.len();
    let rows = m - lag;
    let k = 1 + predictors.len() * lag;
    let x = nalgebra::DMatrix::from_fn(rows, k, |r, c| {
        let t = r + lag;
        if c == 0 {
            1.0
        } else {
            let p = (c - 1) / lag;
            let l = (c - 1) % lag + 1;
            predictors[p][t - l]
        }
    });
    let y = nalgebra::DVector::from_iterator(rows, target[lag..].iter().copied());
    let svd = x.clone().svd(true, true);
    let beta = svd.solve(&y, 1e-14).unwrap();
    let resid = &y - &x * &beta;
    (beta.iter().copied().collect(), resid.norm_squared())
}
