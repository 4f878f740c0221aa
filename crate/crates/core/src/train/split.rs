use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeriesMatrix;

/// Contiguous `target` time points starting at a uniformly drawn offset.
pub fn crop_time_series<R: Rng + ?Sized>(ts: &TimeSeriesMatrix, target: usize, rng: &mut R) -> Result<TimeSeriesMatrix> {
    check_len(ts, target)?;
    let start = rng.random_range(0..=ts.m() - target);
    ts.slice_time(start, target)
}

/// Contiguous `target` time points centred in the series.
pub fn center_crop(ts: &TimeSeriesMatrix, target: usize) -> Result<TimeSeriesMatrix> {
    check_len(ts, target)?;
    ts.slice_time((ts.m() - target) / 2, target)
}

fn check_len(ts: &TimeSeriesMatrix, target: usize) -> Result<()> {
    if ts.m() < target {
        return Err(Error::Data(format!(
            "series has {} time points, fewer than the crop length {target}",
            ts.m()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// K-fold plan: subjects are shuffled once and cut into `k` chunks; fold
/// `i` tests on chunk `i`, validates on chunk `i + 1` and trains on the rest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub subjects: usize,
    pub folds: Vec<Fold>,
}

pub const DEFAULT_FOLDS: usize = 10;

pub fn make_folds(subjects: usize, k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 3 {
        return Err(Error::Config(format!("{k} folds leave no room for train, validation and test")));
    }
    if subjects < k {
        return Err(Error::Contract(format!("{subjects} subjects cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..subjects).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chunk = |i: usize| {
        let lo = i * subjects / k;
        let hi = (i + 1) * subjects / k;
        let mut c = order[lo..hi].to_vec();
        c.sort_unstable();
        c
    };
    let chunks: Vec<Vec<usize>> = (0..k).map(chunk).collect();
    let folds = (0..k)
        .map(|i| {
            let v = (i + 1) % k;
            let mut train: Vec<usize> = (0..k)
                .filter(|&j| j != i && j != v)
                .flat_map(|j| chunks[j].iter().copied())
                .collect();
            train.sort_unstable();
            Fold {
                train,
                val: chunks[v].clone(),
                test: chunks[i].clone(),
            }
        })
        .collect();
    Ok(SplitPlan { seed, subjects, folds })
}
