//! Raw slice kernels shared by the functional API and the tape.

use core::str::FromStr;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::math;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// out[r, out] = x[r, in] * w[in, out] (+ b)
pub(crate) fn matmul_bias(x: &[f64], w: &[f64], b: Option<&[f64]>, rows: usize, inner: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for (xr, or) in x.chunks_exact(inner).zip(out.chunks_exact_mut(cols)) {
        if let Some(b) = b {
            or.copy_from_slice(b);
        }
        for (&xv, wr) in xr.iter().zip(w.chunks_exact(cols)) {
            if xv == 0.0 {
                continue;
            }
            for (o, &wv) in or.iter_mut().zip(wr) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// dx[r, in] += dy[r, out] * w[in, out]^T
pub(crate) fn matmul_grad_input(dy: &[f64], w: &[f64], dx: &mut [f64], inner: usize, cols: usize) {
    for (dyr, dxr) in dy.chunks_exact(cols).zip(dx.chunks_exact_mut(inner)) {
        for (d, wr) in dxr.iter_mut().zip(w.chunks_exact(cols)) {
            *d += dot(dyr, wr);
        }
    }
}

/// dw[in, out] += x[r, in]^T * dy[r, out]
pub(crate) fn matmul_grad_weight(x: &[f64], dy: &[f64], dw: &mut [f64], inner: usize, cols: usize) {
    for (xr, dyr) in x.chunks_exact(inner).zip(dy.chunks_exact(cols)) {
        for (&xv, dwr) in xr.iter().zip(dw.chunks_exact_mut(cols)) {
            if xv == 0.0 {
                continue;
            }
            for (d, &g) in dwr.iter_mut().zip(dyr) {
                *d += xv * g;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators so the loop vectorises; summation order is fixed.
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += x * y;
    }
    s
}

/// Numerically stable softmax of one row, in place.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = math::exp(*v - max);
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Normalises each length-`d` row. Returns (output, xhat, inv_std per row).
pub(crate) fn layer_norm_forward(x: &[f64], gamma: &[f64], beta: &[f64], d: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; rows];
    let inv_d = 1.0 / d as f64;
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() * inv_d;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * inv_d;
        let is = 1.0 / math::sqrt(var + LAYER_NORM_EPS);
        inv_std[r] = is;
        let hr = &mut xhat[r * d..(r + 1) * d];
        let or = &mut out[r * d..(r + 1) * d];
        for j in 0..d {
            let h = (xr[j] - mean) * is;
            hr[j] = h;
            or[j] = gamma[j] * h + beta[j];
        }
    }
    (out, xhat, inv_std)
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl core::fmt::Display for Activation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
        })
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // x * Phi(x), exact Gaussian CDF form
            Activation::Gelu => 0.5 * x * (1.0 + math::erf(x * FRAC_1_SQRT_2)),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + math::erf(x * FRAC_1_SQRT_2));
                let pdf = INV_SQRT_2PI * math::exp(-0.5 * x * x);
                cdf + x * pdf
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}
