use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Scores at or above this are predicted positive (patient).
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    /// Absent when only one class is present.
    pub auc: Option<f64>,
    pub n: usize,
}

/// Accuracy, precision and recall of thresholded scores with label 1 as the
/// positive class, and the rank AUC of the raw scores. Precision with no
/// positive predictions, and recall with no positive labels, are zero.
pub fn evaluate_metrics(scores: &[f64], labels: &[usize]) -> Result<Metrics> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= DECISION_THRESHOLD, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Metrics {
        acc: ratio(tp + tn, scores.len()),
        prec: ratio(tp, tp + fp),
        rec: ratio(tp, tp + fn_),
        auc: auc(scores, labels)?,
        n: scores.len(),
    })
}

/// Mann-Whitney AUC with midranks for tied scores.
pub fn auc(scores: &[f64], labels: &[usize]) -> Result<Option<f64>> {
    check(scores, labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks are 1-based; the tie group i..=j shares the mean rank.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += mid * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (pos * (pos + 1)) as f64 / 2.0;
    Ok(Some(u / (pos * neg) as f64))
}

fn check(scores: &[f64], labels: &[usize]) -> Result<()> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Contract(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("label {y} is not binary")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite { op: "metrics" });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (zero for a single value).
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub folds: Vec<Metrics>,
    pub acc: Summary,
    pub prec: Summary,
    pub rec: Summary,
    /// Over folds where AUC is defined; absent if none.
    pub auc: Option<Summary>,
}

fn summarize_values(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
    } else {
        0.0
    };
    Summary { mean, std }
}

pub fn summarize(folds: Vec<Metrics>) -> Result<MetricsReport> {
    if folds.is_empty() {
        return Err(Error::Contract("no fold metrics to summarise".into()));
    }
    let pick = |f: fn(&Metrics) -> f64| summarize_values(&folds.iter().map(f).collect::<Vec<_>>());
    let aucs: Vec<f64> = folds.iter().filter_map(|m| m.auc).collect();
    Ok(MetricsReport {
        acc: pick(|m| m.acc),
        prec: pick(|m| m.prec),
        rec: pick(|m| m.rec),
        auc: (!aucs.is_empty()).then(|| summarize_values(&aucs)),
        folds,
    })
}
