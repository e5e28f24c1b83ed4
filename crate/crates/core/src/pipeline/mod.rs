//! Experiment orchestration: configuration, training, evaluation against
//! signal length, latency timing and report files.

mod config;
mod experiment;
mod latency;
mod report;

pub use config::{DataSource, ExperimentConfig, SyntheticOptions};
pub use experiment::{evaluate, feature_condition_sweep, load_data, prepare, run_experiment, train_model, TrainedModel};
pub use latency::{bench_latency, percentile, LatencyStats, StageStats, STAGE_CLASSIFICATION, STAGE_FEATURES, STAGE_FUSION};
pub use report::{
    emit_report, roc_curve, roc_curves, summary, AccuracyRow, ExperimentReport, PerClassRow, RocCurve, RocPoint,
    SubjectRow, ACCURACY_FILE, CONFUSION_FILE, LATENCY_FILE, PER_CLASS_FILE, PER_SUBJECT_FILE, ROC_FILE, SUMMARY_FILE,
};
