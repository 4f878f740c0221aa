//! Training, cross-validation, metrics and attention-based importance.

mod adam;
mod config;
mod fit;
mod importance;
mod metrics;
mod split;

pub use adam::Adam;
pub use config::{lr_at, TrainConfig};
pub use fit::{fold_rng, predict_scores, train_fold, EpochRecord, Example, FoldFit};
pub use importance::{importance_scores, ImportanceScores, DEFAULT_TEMPORAL_WEIGHT};
pub use metrics::{auc, evaluate_metrics, summarize, Metrics, MetricsReport, Summary, DECISION_THRESHOLD};
pub use split::{center_crop, crop_time_series, make_folds, Fold, SplitPlan, DEFAULT_FOLDS};
