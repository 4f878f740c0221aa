use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use starformer_core::centrality::{apply_ordering, AtlasPartition, ec_ordering, sample_fraction, Network, Provenance, RoiOrdering};
use starformer_core::connectivity::{build_effective_connectivity, EffectiveConnectivity};
use starformer_core::model::ModelState;
use starformer_core::train::{
    center_crop, evaluate_metrics, importance_scores, make_folds, predict_scores, summarize, train_fold, EpochRecord,
    Example, ImportanceScores, Metrics, MetricsReport, SplitPlan,
};
use starformer_core::TimeSeriesMatrix;

use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::config::{OrderingMode, RunConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::formats::Atlas;

pub const THREADS_ENV: &str = "STARFORMER_THREADS";

/// Worker pool sized by `STARFORMER_THREADS` (all cores when unset).
/// Results never depend on the thread count.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV}={v:?} is not a positive integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// One effective-connectivity matrix per subject, in dataset order.
pub fn compute_connectivity(ds: &Dataset, lag: usize, alpha: f64) -> Result<Vec<EffectiveConnectivity>> {
    ds.subjects
        .par_iter()
        .map(|s| build_effective_connectivity(&s.series, lag, alpha).map_err(Error::from))
        .collect()
}

/// Generator for everything ordering-related in fold `fold`, on a stream
/// disjoint from the training streams.
pub fn ordering_rng(seed: u64, fold: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1 << 32) | fold as u64);
    rng
}

/// Saved form of a ROI ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrderingFile {
    pub seed: u64,
    pub provenance: Provenance,
    pub subsample: f64,
    /// Atlas ROI ids in file order.
    pub roi_ids: Vec<String>,
    /// Position `i` of the model input holds atlas ROI `permutation[i]`.
    pub permutation: Vec<usize>,
    pub ordered_roi_ids: Vec<String>,
    pub ordered_networks: Vec<Network>,
    /// Averaged centrality per atlas ROI.
    pub mean_centrality: Vec<f64>,
    pub sampled_subjects: Vec<String>,
    /// Sampled subjects whose power iteration hit the iteration cap.
    pub unconverged: usize,
}

impl OrderingFile {
    pub fn ordering(&self) -> Result<RoiOrdering> {
        Ok(RoiOrdering::new(self.permutation.clone(), self.provenance)?)
    }
}

pub struct SampledOrdering {
    pub ordering: RoiOrdering,
    pub mean_centrality: Vec<f64>,
    pub sampled: Vec<usize>,
    pub unconverged: usize,
}

/// Centrality ordering from a `fraction` sample of the patients among
/// `candidates` (indices into `graphs` and `labels`).
pub fn sampled_ec_ordering(
    graphs: &[EffectiveConnectivity],
    labels: &[usize],
    candidates: &[usize],
    partition: &AtlasPartition,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SampledOrdering> {
    let patients: Vec<usize> = candidates.iter().copied().filter(|&i| labels[i] == 1).collect();
    if patients.is_empty() {
        return Err(Error::Core(starformer_core::Error::Data(
            "no patients available for centrality sampling".into(),
        )));
    }
    let sampled = sample_fraction(&patients, fraction, rng)?;
    let picked: Vec<&EffectiveConnectivity> = sampled.iter().map(|&i| &graphs[i]).collect();
    let (ordering, pbar, unconverged) = ec_ordering(&picked, partition)?;
    Ok(SampledOrdering {
        ordering,
        mean_centrality: pbar.p,
        sampled,
        unconverged,
    })
}

pub fn ordering_file(atlas: &Atlas, s: &SampledOrdering, seed: u64, subsample: f64, subject_ids: &[String]) -> OrderingFile {
    let ids = atlas.roi_ids();
    let perm = s.ordering.perm();
    OrderingFile {
        seed,
        provenance: Provenance::EcSorted,
        subsample,
        ordered_roi_ids: perm.iter().map(|&i| ids[i].clone()).collect(),
        ordered_networks: perm.iter().map(|&i| atlas.entries[i].network).collect(),
        roi_ids: ids,
        permutation: perm.to_vec(),
        mean_centrality: s.mean_centrality.clone(),
        sampled_subjects: s.sampled.iter().map(|&i| subject_ids[i].clone()).collect(),
        unconverged: s.unconverged,
    }
}

/// Where each fold's ROI ordering comes from.
#[derive(Clone, Debug)]
pub enum OrderingPlan<'a> {
    /// The same ordering in every fold.
    Fixed(RoiOrdering),
    /// Built per fold from that fold's training subjects only. For
    /// centrality orderings, `graphs` holds one matrix per dataset subject;
    /// they are computed on demand when absent.
    PerFold {
        mode: OrderingMode,
        graphs: Option<&'a [EffectiveConnectivity]>,
    },
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub test_labels: Vec<usize>,
    pub test_scores: Vec<f64>,
    pub metrics: Metrics,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub first_batch_loss: f64,
    pub ordering: RoiOrdering,
    pub centrality_subjects: Vec<String>,
    pub state: ModelState,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub folds: Vec<FoldOutcome>,
    pub plan: SplitPlan,
    /// Subjects shorter than the model sequence length.
    pub skipped: Vec<String>,
}

/// Indices of subjects long enough for the model; logs the rest.
pub fn eligible_subjects(ds: &Dataset, seq_len: usize) -> (Vec<usize>, Vec<String>) {
    let mut keep = Vec::new();
    let mut skipped = Vec::new();
    for (i, s) in ds.subjects.iter().enumerate() {
        if s.series.m() >= seq_len {
            keep.push(i);
        } else {
            log::warn!("skipping subject {}: {} time points < {seq_len}", s.id, s.series.m());
            skipped.push(s.id.clone());
        }
    }
    (keep, skipped)
}

/// K-fold cross-validation; folds run in parallel on the current rayon
/// pool with independent generators. `fold_limit` runs only the first
/// folds of the plan.
pub fn cross_validate(ds: &Dataset, cfg: &RunConfig, plan: &OrderingPlan<'_>, fold_limit: Option<usize>) -> Result<CvOutcome> {
    cfg.check()?;
    let model_cfg = cfg.model_config(ds.n())?;
    let train_cfg = cfg.train_config();
    let (eligible, skipped) = eligible_subjects(ds, model_cfg.seq_len);
    let split = make_folds(eligible.len(), cfg.folds, cfg.seed)?;
    if let OrderingPlan::Fixed(o) = plan {
        if o.len() != ds.n() {
            return Err(Error::Core(starformer_core::Error::Config(format!(
                "ordering covers {} ROIs, data has {}",
                o.len(),
                ds.n()
            ))));
        }
    }
    let computed;
    let graphs = match plan {
        OrderingPlan::PerFold {
            mode: OrderingMode::Ec,
            graphs: None,
        } => {
            computed = compute_connectivity(ds, cfg.connectivity.lag, cfg.connectivity.alpha)?;
            Some(computed.as_slice())
        }
        OrderingPlan::PerFold { graphs, .. } => *graphs,
        OrderingPlan::Fixed(_) => None,
    };
    if graphs.is_some_and(|g| g.len() != ds.subjects.len()) {
        return Err(Error::Core(starformer_core::Error::Contract(
            "one connectivity matrix per subject required".into(),
        )));
    }
    let labels = ds.labels();
    let ids: Vec<String> = ds.subjects.iter().map(|s| s.id.clone()).collect();
    let count = fold_limit.unwrap_or(split.folds.len()).min(split.folds.len());

    let folds = (0..count)
        .into_par_iter()
        .map(|k| {
            let fold = &split.folds[k];
            let to_ds = |v: &[usize]| v.iter().map(|&i| eligible[i]).collect::<Vec<_>>();
            let (train_idx, val_idx, test_idx) = (to_ds(&fold.train), to_ds(&fold.val), to_ds(&fold.test));
            let mut rng = ordering_rng(cfg.seed, k);
            let (ordering, sampled) = match plan {
                OrderingPlan::Fixed(o) => (o.clone(), Vec::new()),
                OrderingPlan::PerFold { mode, .. } => match mode {
                    OrderingMode::Identity => (RoiOrdering::identity(ds.n()), Vec::new()),
                    OrderingMode::Random => (RoiOrdering::random(ds.n(), &mut rng), Vec::new()),
                    OrderingMode::Ec => {
                        let g = graphs.expect("graphs computed for centrality ordering");
                        let s = sampled_ec_ordering(g, &labels, &train_idx, &ds.partition, cfg.ordering.subsample, &mut rng)?;
                        (s.ordering, s.sampled.iter().map(|&i| ids[i].clone()).collect())
                    }
                },
            };
            let reorder = |idx: &[usize]| -> Result<Vec<TimeSeriesMatrix>> {
                idx.iter()
                    .map(|&i| apply_ordering(&ds.subjects[i].series, &ordering).map_err(Error::from))
                    .collect()
            };
            let (train_ts, val_ts, test_ts) = (reorder(&train_idx)?, reorder(&val_idx)?, reorder(&test_idx)?);
            let fit = train_fold(
                &model_cfg,
                &train_cfg,
                k,
                &examples(&train_ts, &train_idx, &labels),
                &examples(&val_ts, &val_idx, &labels),
            )?;
            let test_refs: Vec<&TimeSeriesMatrix> = test_ts.iter().collect();
            let scores = predict_scores(&fit.state, &test_refs)?;
            let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
            let metrics = evaluate_metrics(&scores, &test_labels)?;
            log::info!(
                "fold {k}: acc {:.3} after {} epochs (best epoch {})",
                metrics.acc,
                fit.curve.len(),
                fit.best_epoch
            );
            Ok(FoldOutcome {
                fold: k,
                test_subjects: test_idx.iter().map(|&i| ids[i].clone()).collect(),
                test_labels,
                test_scores: scores,
                metrics,
                curve: fit.curve,
                best_epoch: fit.best_epoch,
                best_val_acc: fit.best_val_acc,
                first_batch_loss: fit.first_batch_loss,
                ordering,
                centrality_subjects: sampled,
                state: fit.state,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = summarize(folds.iter().map(|f| f.metrics.clone()).collect())?;
    Ok(CvOutcome {
        report,
        folds,
        plan: split,
        skipped,
    })
}

fn examples<'a>(series: &'a [TimeSeriesMatrix], idx: &[usize], labels: &[usize]) -> Vec<Example<'a>> {
    series
        .iter()
        .zip(idx)
        .map(|(series, &i)| Example {
            series,
            label: labels[i],
        })
        .collect()
}

pub fn fold_checkpoint(ds: &Dataset, cfg: &RunConfig, fold: &FoldOutcome) -> Checkpoint {
    Checkpoint {
        state: fold.state.clone(),
        meta: CheckpointMeta {
            seed: cfg.seed,
            fold: Some(fold.fold),
            best_epoch: Some(fold.best_epoch),
            roi_ids: ds.atlas.roi_ids(),
            ordering: fold.ordering.perm().to_vec(),
            ordering_provenance: fold.ordering.provenance,
            temporal_weight: cfg.temporal_weight,
        },
    }
}

fn checked_ordering(ck: &Checkpoint, ds: &Dataset) -> Result<RoiOrdering> {
    let ids = ds.atlas.roi_ids();
    if let Some(i) = (0..ids.len().max(ck.meta.roi_ids.len())).find(|&i| ids.get(i) != ck.meta.roi_ids.get(i)) {
        return Err(Error::RoiIdMismatch {
            path: ds.manifest.atlas_path.clone().into(),
            subject: "atlas".into(),
            column: i + 1,
            expected: ck.meta.roi_ids.get(i).cloned().unwrap_or_default(),
            found: ids.get(i).cloned().unwrap_or_default(),
        });
    }
    Ok(RoiOrdering::new(ck.meta.ordering.clone(), ck.meta.ordering_provenance)?)
}

/// Dataset subjects in model ROI order, centre-cropped to the model length.
fn model_inputs(ck: &Checkpoint, ds: &Dataset) -> Result<(Vec<usize>, Vec<TimeSeriesMatrix>)> {
    let ordering = checked_ordering(ck, ds)?;
    let m = ck.state.config().seq_len;
    let (eligible, _) = eligible_subjects(ds, m);
    if eligible.is_empty() {
        return Err(Error::Core(starformer_core::Error::Data(format!(
            "no subject has at least {m} time points"
        ))));
    }
    let inputs = eligible
        .iter()
        .map(|&i| Ok(center_crop(&apply_ordering(&ds.subjects[i].series, &ordering)?, m)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((eligible, inputs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub id: String,
    pub label: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub fold: Option<usize>,
    pub metrics: Metrics,
    pub subjects: Vec<SubjectScore>,
}

pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &Dataset) -> Result<EvalReport> {
    let (eligible, inputs) = model_inputs(ck, ds)?;
    let scores: Vec<f64> = inputs
        .par_iter()
        .map(|ts| predict_scores(&ck.state, &[ts]).map(|v| v[0]))
        .collect::<std::result::Result<_, _>>()?;
    let labels: Vec<usize> = eligible.iter().map(|&i| ds.subjects[i].label).collect();
    let metrics = evaluate_metrics(&scores, &labels)?;
    Ok(EvalReport {
        seed: ck.meta.seed,
        fold: ck.meta.fold,
        metrics,
        subjects: eligible
            .iter()
            .zip(&scores)
            .map(|(&i, &score)| SubjectScore {
                id: ds.subjects[i].id.clone(),
                label: ds.subjects[i].label,
                score,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceRow {
    pub roi_id: String,
    pub network: Network,
    pub temporal: f64,
    pub spatial: f64,
    pub combined: f64,
    /// 1 for the most important ROI.
    pub rank: usize,
}

pub const ATTRIBUTION: &str = "temporal: layer- and head-averaged attention received by each time point, \
times that time point's output norm, shared over ROIs by |x[t, r]| * ||embedding row r||; \
spatial: head-averaged attention times key-ROI output norm, summed per query ROI; \
both normalised per subject and averaged over subjects";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMeta {
    pub seed: u64,
    pub fold: Option<usize>,
    pub subjects: usize,
    pub temporal_weight: f64,
    pub top_fraction: f64,
    pub top_rois: Vec<String>,
    pub attribution: String,
}

/// Importance per atlas ROI (file order).
pub fn explain_checkpoint(ck: &Checkpoint, ds: &Dataset, temporal_weight: f64, top: f64) -> Result<(Vec<ImportanceRow>, ImportanceMeta)> {
    let (_, inputs) = model_inputs(ck, ds)?;
    let refs: Vec<&TimeSeriesMatrix> = inputs.iter().collect();
    let model_order = importance_scores(&ck.state, &refs, temporal_weight)?;
    let perm = &ck.meta.ordering;
    let to_atlas = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for (pos, &roi) in perm.iter().enumerate() {
            out[roi] = v[pos];
        }
        out
    };
    let scores = ImportanceScores {
        temporal: to_atlas(&model_order.temporal),
        spatial: to_atlas(&model_order.spatial),
        combined: to_atlas(&model_order.combined),
        temporal_weight,
    };
    let mut rank = vec![0; perm.len()];
    for (r, i) in scores.ranking().into_iter().enumerate() {
        rank[i] = r + 1;
    }
    let ids = ds.atlas.roi_ids();
    let top_rois = scores.top_k(top)?.into_iter().map(|i| ids[i].clone()).collect();
    let rows = (0..perm.len())
        .map(|i| ImportanceRow {
            roi_id: ids[i].clone(),
            network: ds.partition.network_of(i),
            temporal: scores.temporal[i],
            spatial: scores.spatial[i],
            combined: scores.combined[i],
            rank: rank[i],
        })
        .collect();
    let meta = ImportanceMeta {
        seed: ck.meta.seed,
        fold: ck.meta.fold,
        subjects: inputs.len(),
        temporal_weight,
        top_fraction: top,
        top_rois,
        attribution: ATTRIBUTION.into(),
    };
    Ok((rows, meta))
}
