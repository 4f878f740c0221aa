//! Pairwise Granger causality and the binary effective-connectivity matrix.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use crate::series::TimeSeriesMatrix;

use crate::error::{Error, Result};
use crate::stats;

/// Diagonal jitter added to every Gram matrix before factorisation.
pub const RIDGE_JITTER: f64 = 1e-10;

/// Ordinary least-squares fit of a lagged autoregression.
#[derive(Clone, Debug, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    /// `coefficients[p * lag + (k - 1)]` multiplies predictor `p` at lag `k`.
    pub coefficients: Vec<f64>,
    /// Residuals for target indices `lag..m`.
    pub residuals: Vec<f64>,
    pub rss: f64,
}

/// Regress `target[t]` on an intercept and `predictors[p][t - k]` for
/// `k = 1..=lag`, over `t` in `lag..m`.
pub fn ols_ar_fit(target: &[f64], predictors: &[&[f64]], lag: usize) -> Result<ArFit> {
    let m = target.len();
    if lag == 0 {
        return Err(Error::Config("lag must be at least 1".into()));
    }
    if predictors.iter().any(|p| p.len() != m) {
        return Err(Error::dim("ols_ar_fit", "predictor length differs from target"));
    }
    let k = 1 + predictors.len() * lag;
    if m < lag || m - lag < k + 2 {
        return Err(Error::Data(format!(
            "{} usable rows for {k} coefficients at lag {lag}",
            m.saturating_sub(lag)
        )));
    }

    let row = |t: usize, out: &mut [f64]| {
        out[0] = 1.0;
        for (p, series) in predictors.iter().enumerate() {
            for l in 1..=lag {
                out[1 + p * lag + l - 1] = series[t - l];
            }
        }
    };

    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut x = vec![0.0; k];
    for t in lag..m {
        row(t, &mut x);
        for i in 0..k {
            rhs[i] += x[i] * target[t];
            for j in 0..=i {
                gram[i * k + j] += x[i] * x[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[j * k + i] = gram[i * k + j];
        }
        gram[i * k + i] += RIDGE_JITTER;
    }
    let beta = cholesky_solve(&mut gram, &rhs, k)?;

    let mut residuals = Vec::with_capacity(m - lag);
    let mut rss = 0.0;
    for t in lag..m {
        row(t, &mut x);
        let pred: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let r = target[t] - pred;
        rss += r * r;
        residuals.push(r);
    }
    Ok(ArFit {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        residuals,
        rss,
    })
}

// Solves `a x = b` for symmetric positive definite `a` (overwritten).
fn cholesky_solve(a: &mut [f64], b: &[f64], k: usize) -> Result<Vec<f64>> {
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::SingularFit);
        }
        let d = crate::math::sqrt(d);
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= a[i * k + p] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= a[p * k + i] * y[p];
        }
        y[i] /= a[i * k + i];
    }
    Ok(y)
}

/// Outcome of one directed Granger test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcTestResult {
    pub f_stat: f64,
    pub p_value: f64,
    pub decision: u8,
    pub lag: usize,
    pub rss_restricted: f64,
    pub rss_full: f64,
    pub df_num: usize,
    pub df_den: usize,
    /// The full model fit exactly while the restricted one did not.
    pub deterministic: bool,
}

/// Does `src` Granger-cause `dst` at lag `lag`?
///
/// Restricted model: intercept + `lag` own lags of `dst`. Full model adds
/// `lag` lags of `src`. `F = ((rss_r - rss_f) / lag) / (rss_f / df)` with
/// `df = (m - lag) - (2 lag + 1)`.
pub fn granger_f_test(src: &[f64], dst: &[f64], lag: usize, alpha: f64) -> Result<GcTestResult> {
    if src.len() != dst.len() {
        return Err(Error::dim("granger_f_test", "series lengths differ"));
    }
    let restricted = ols_ar_fit(dst, &[dst], lag)?;
    granger_against(&restricted, src, dst, lag, alpha)
}

fn granger_against(restricted: &ArFit, src: &[f64], dst: &[f64], lag: usize, alpha: f64) -> Result<GcTestResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let full = ols_ar_fit(dst, &[dst, src], lag)?;
    let m = dst.len();
    let df_num = lag;
    let df_den = (m - lag) - (2 * lag + 1);
    let rss_r = restricted.rss;
    // Nested OLS never fits worse; the jitter can break that by an ulp.
    let rss_f = full.rss.min(rss_r);

    let (f_stat, p_value, deterministic) = if rss_r <= 0.0 {
        (0.0, 1.0, false)
    } else if rss_f <= f64::EPSILON * rss_r {
        (f64::INFINITY, 0.0, true)
    } else {
        let f = ((rss_r - rss_f) / df_num as f64) / (rss_f / df_den as f64);
        (f, stats::f_sf(f, df_num as f64, df_den as f64), false)
    };
    Ok(GcTestResult {
        f_stat,
        p_value,
        decision: u8::from(p_value < alpha),
        lag,
        rss_restricted: rss_r,
        rss_full: rss_f,
        df_num,
        df_den,
        deterministic,
    })
}

/// Binary directed adjacency from pairwise Granger tests; `g[i][j] = 1`
/// means ROI `i` Granger-causes ROI `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConnectivity {
    n: usize,
    g: Vec<u8>,
    pub alpha: f64,
    pub lag: usize,
    /// Pairs whose fit was singular and were recorded as 0.
    pub warnings: usize,
}

impl EffectiveConnectivity {
    pub fn from_matrix(n: usize, g: Vec<u8>, alpha: f64, lag: usize) -> Result<Self> {
        if g.len() != n * n {
            return Err(Error::dim("effective connectivity", format!("{} entries for n = {n}", g.len())));
        }
        if g.iter().any(|&v| v > 1) {
            return Err(Error::Data("connectivity entries must be 0 or 1".into()));
        }
        if (0..n).any(|i| g[i * n + i] != 0) {
            return Err(Error::Data("connectivity diagonal must be zero".into()));
        }
        Ok(EffectiveConnectivity { n, g, alpha, lag, warnings: 0 })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.g[i * self.n + j]
    }

    pub fn entries(&self) -> &[u8] {
        &self.g
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.g.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.g.iter().filter(|&&v| v == 1).count()
    }

    /// Edges over the `n (n - 1)` possible off-diagonal pairs.
    pub fn density(&self) -> f64 {
        self.edge_count() as f64 / (self.n * (self.n - 1)) as f64
    }
}

/// Runs every ordered pair `i != j` on z-scored rows.
pub fn build_effective_connectivity(ts: &TimeSeriesMatrix, lag: usize, alpha: f64) -> Result<EffectiveConnectivity> {
    ts.validate_for_lag(lag)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let z = ts.z_scored();
    let n = ts.n();
    let mut g = vec![0u8; n * n];
    let mut warnings = 0;
    for j in 0..n {
        let dst = z.row(j);
        let restricted = match ols_ar_fit(dst, &[dst], lag) {
            Ok(fit) => fit,
            Err(Error::SingularFit) => {
                warnings += n - 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for i in (0..n).filter(|&i| i != j) {
            match granger_against(&restricted, z.row(i), dst, lag, alpha) {
                Ok(res) => g[i * n + j] = res.decision,
                Err(Error::SingularFit) => warnings += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(EffectiveConnectivity { n, g, alpha, lag, warnings })
}
