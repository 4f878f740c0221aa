//! Files written by the `train`, `eval` and `explain` commands.

use std::path::Path;

use serde::{Deserialize, Serialize};
use starformer_core::centrality::Provenance;
use starformer_core::train::{Metrics, MetricsReport};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::formats::{csv_field, format_f64, write_bytes, write_json};
use crate::pipeline::{fold_checkpoint, CvOutcome, ImportanceMeta, ImportanceRow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub epochs_run: usize,
    pub ordering: Provenance,
    pub centrality_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
}

/// Contents of `metrics.json`. Holds no timings or paths, so equal seeds
/// give identical files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub profile: String,
    pub folds_planned: usize,
    pub report: MetricsReport,
    pub per_fold: Vec<FoldSummary>,
    pub skipped_subjects: Vec<String>,
}

pub fn run_metrics(cfg: &RunConfig, cv: &CvOutcome) -> RunMetrics {
    RunMetrics {
        seed: cfg.seed,
        profile: cfg.profile.to_string(),
        folds_planned: cv.plan.folds.len(),
        report: cv.report.clone(),
        per_fold: cv
            .folds
            .iter()
            .map(|f| FoldSummary {
                fold: f.fold,
                metrics: f.metrics.clone(),
                best_epoch: f.best_epoch,
                best_val_acc: f.best_val_acc,
                epochs_run: f.curve.len(),
                ordering: f.ordering.provenance,
                centrality_subjects: f.centrality_subjects.clone(),
                test_subjects: f.test_subjects.clone(),
            })
            .collect(),
        skipped_subjects: cv.skipped.clone(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut s = String::from("fold,acc,prec,rec,auc,n\n");
    for (k, m) in report.folds.iter().enumerate() {
        s += &format!(
            "{k},{},{},{},{},{}\n",
            format_f64(m.acc),
            format_f64(m.prec),
            format_f64(m.rec),
            opt(m.auc),
            m.n
        );
    }
    let n: usize = report.folds.iter().map(|m| m.n).sum();
    for (name, pick) in [("mean", 0), ("std", 1)] {
        let f = |s: &starformer_core::train::Summary| format_f64(if pick == 0 { s.mean } else { s.std });
        s += &format!(
            "{name},{},{},{},{},{n}\n",
            f(&report.acc),
            f(&report.prec),
            f(&report.rec),
            report.auc.as_ref().map(f).unwrap_or_default()
        );
    }
    s
}

pub fn loss_curve_csv(cv: &CvOutcome) -> String {
    let mut s = String::from("fold,epoch,train_loss,val_acc,val_loss\n");
    for f in &cv.folds {
        for r in &f.curve {
            s += &format!(
                "{},{},{},{},{}\n",
                f.fold,
                r.epoch,
                format_f64(r.train_loss),
                format_f64(r.val_acc),
                format_f64(r.val_loss)
            );
        }
    }
    s
}

pub fn predictions_csv(cv: &CvOutcome) -> String {
    let mut s = String::from("fold,subject,label,score\n");
    for f in &cv.folds {
        for ((id, label), score) in f.test_subjects.iter().zip(&f.test_labels).zip(&f.test_scores) {
            s += &format!("{},{},{label},{}\n", f.fold, csv_field(id), format_f64(*score));
        }
    }
    s
}

/// Writes `metrics.json`, `metrics.csv`, `loss_curve.csv`,
/// `predictions.csv`, `config.json` and `checkpoints/fold-NN.ckpt`.
pub fn write_run(out: &Path, ds: &Dataset, cfg: &RunConfig, cv: &CvOutcome) -> Result<RunMetrics> {
    let metrics = run_metrics(cfg, cv);
    write_json(&out.join("metrics.json"), &metrics)?;
    write_bytes(&out.join("metrics.csv"), metrics_csv(&cv.report).as_bytes())?;
    write_bytes(&out.join("loss_curve.csv"), loss_curve_csv(cv).as_bytes())?;
    write_bytes(&out.join("predictions.csv"), predictions_csv(cv).as_bytes())?;
    write_json(&out.join("config.json"), cfg)?;
    for f in &cv.folds {
        save_checkpoint(&out.join(format!("checkpoints/fold-{:02}.ckpt", f.fold)), &fold_checkpoint(ds, cfg, f))?;
    }
    Ok(metrics)
}

pub fn importance_csv(rows: &[ImportanceRow]) -> String {
    let mut s = String::from("roi_id,network,temporal,spatial,combined,rank\n");
    for r in rows {
        s += &format!(
            "{},{},{},{},{},{}\n",
            csv_field(&r.roi_id),
            r.network.label(),
            format_f64(r.temporal),
            format_f64(r.spatial),
            format_f64(r.combined),
            r.rank
        );
    }
    s
}

/// Writes the score table and its metadata next to it (`.json`).
pub fn write_importance(out: &Path, rows: &[ImportanceRow], meta: &ImportanceMeta) -> Result<()> {
    write_bytes(out, importance_csv(rows).as_bytes())?;
    let mut side = out.with_extension("json");
    if side == out {
        side = out.with_extension("meta.json");
    }
    write_json(&side, meta)
}
