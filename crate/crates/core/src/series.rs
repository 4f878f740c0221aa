use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Tensor;
use crate::math;

/// One subject's ROI × time matrix (`n` rows of length `m`, row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesMatrix {
    values: Vec<f64>,
    n: usize,
    m: usize,
    roi_ids: Vec<String>,
}

impl TimeSeriesMatrix {
    pub fn new(values: Vec<f64>, n: usize, m: usize, roi_ids: Vec<String>) -> Result<Self> {
        if n == 0 || m == 0 || values.len() != n * m {
            return Err(Error::Data(format!(
                "time series needs {n}x{m} = {} values, got {}",
                n * m,
                values.len()
            )));
        }
        if roi_ids.len() != n {
            return Err(Error::Data(format!("{} roi ids for {n} rows", roi_ids.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at roi {} timepoint {}",
                pos / m,
                pos % m
            )));
        }
        Ok(TimeSeriesMatrix { values, n, m, roi_ids })
    }

    /// Rows named `0..n`.
    pub fn with_default_ids(values: Vec<f64>, n: usize, m: usize) -> Result<Self> {
        let ids = (0..n).map(|i| format!("{i}")).collect();
        Self::new(values, n, m, ids)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Data("ragged time series rows".into()));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::with_default_ids(values, rows.len(), m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn roi_ids(&self) -> &[String] {
        &self.roi_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    /// Checks the shape needed for lag-`h` Granger tests with an intercept:
    /// at least two ROIs and `m - h >= (2h + 1) + 2` fitted rows.
    pub fn validate_for_lag(&self, h: usize) -> Result<()> {
        if h == 0 {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Data(format!("need at least 2 ROIs, got {}", self.n)));
        }
        if self.m < 3 * h + 3 {
            return Err(Error::Data(format!(
                "series of length {} too short for lag {h} (need {})",
                self.m,
                3 * h + 3
            )));
        }
        Ok(())
    }

    /// Each row shifted to zero mean and scaled to unit (population)
    /// variance; constant rows become zeros.
    pub fn z_scored(&self) -> TimeSeriesMatrix {
        let mut out = self.clone();
        for row in out.values.chunks_exact_mut(self.m) {
            let mean = row.iter().sum::<f64>() / self.m as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / self.m as f64;
            let sd = math::sqrt(var);
            for v in row.iter_mut() {
                *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
            }
        }
        out
    }

    /// Contiguous time slice `[start, start + len)`.
    pub fn slice_time(&self, start: usize, len: usize) -> Result<TimeSeriesMatrix> {
        if len == 0 || start + len > self.m {
            return Err(Error::Contract(format!(
                "time slice {start}..{} outside 0..{}",
                start + len,
                self.m
            )));
        }
        let values = (0..self.n)
            .flat_map(|i| self.row(i)[start..start + len].iter().copied())
            .collect();
        Ok(TimeSeriesMatrix {
            values,
            n: self.n,
            m: len,
            roi_ids: self.roi_ids.clone(),
        })
    }

    /// Output row `i` is input row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<TimeSeriesMatrix> {
        if perm.len() != self.n {
            return Err(Error::Contract(format!(
                "ordering of length {} for {} ROIs",
                perm.len(),
                self.n
            )));
        }
        let mut values = Vec::with_capacity(self.values.len());
        let mut roi_ids = Vec::with_capacity(self.n);
        for &p in perm {
            if p >= self.n {
                return Err(Error::Contract(format!("ordering index {p} out of range")));
            }
            values.extend_from_slice(self.row(p));
            roi_ids.push(self.roi_ids[p].clone());
        }
        Ok(TimeSeriesMatrix {
            values,
            n: self.n,
            m: self.m,
            roi_ids,
        })
    }

    /// `[n, m]` tensor, one ROI per row.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(alloc::vec![self.n, self.m], self.values.clone()).expect("validated shape")
    }

    /// `[m, n]` tensor, one time point per row.
    pub fn to_time_major(&self) -> Tensor {
        self.to_tensor().transpose()
    }
}
