use crate::classifier::{self, ClassPosterior, MlpModel};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureLayout, FeatureSet, FeatureVector};
use crate::fusion;
use crate::par::{self, ExecMode};
use crate::signal_io::{
    generate_synthetic, load_recordings, segment, split_by_trial, CsvSchema, DatasetSplit, EmgRecording,
};

use super::config::{DataSource, ExperimentConfig};
use super::latency::bench_latency;
use super::report::{roc_curves, AccuracyRow, ExperimentReport, PerClassRow, SubjectRow};

/// Loads the configured data source.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Vec<EmgRecording>> {
    match &cfg.data {
        DataSource::Synthetic => generate_synthetic(&cfg.synthetic_spec()),
        DataSource::Csv(path) => {
            let schema = CsvSchema {
                sample_rate_hz: cfg.sample_rate_hz,
                ..CsvSchema::default()
            };
            load_recordings(path, &schema)
        }
    }
}

/// Validates the config, loads data and splits it by trial.
pub fn prepare(cfg: &ExperimentConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    let recordings = load_data(cfg)?;
    let channels = recordings[0].channel_count();
    if recordings.iter().any(|r| r.channel_count() != channels) {
        return Err(Error::InvalidRecording("recordings differ in channel count".into()));
    }
    if let Some(r) = recordings.iter().find(|r| r.label() > cfg.class_count) {
        return Err(Error::LabelOutOfRange {
            label: r.label(),
            class_count: cfg.class_count,
        });
    }
    split_by_trial(recordings, &cfg.train_trials, &cfg.test_trials)
}

/// A model together with the extractor whose layout it was trained on.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub extractor: FeatureExtractor,
    pub layout: FeatureLayout,
    pub loss_history: Vec<f64>,
    pub best_epoch: usize,
    pub training_windows: usize,
}

impl TrainedModel {
    /// Wraps a loaded model, checking it against the config's layout.
    pub fn from_model(cfg: &ExperimentConfig, model: MlpModel, channels: usize) -> Result<Self> {
        let extractor = cfg.extractor(cfg.feature_set)?;
        let layout = extractor.layout(channels);
        if model.feature_layout() != layout.signature() {
            return Err(Error::LayoutMismatch {
                expected: model.feature_layout().to_string(),
                actual: layout.signature(),
            });
        }
        Ok(Self {
            model,
            extractor,
            layout,
            loss_history: Vec::new(),
            best_epoch: 0,
            training_windows: 0,
        })
    }

    pub fn feature_set(&self) -> FeatureSet {
        self.layout.feature_set
    }
}

/// Extracts features from every window of every training recording and
/// trains a fresh model. Only `train` is read.
pub fn train_model(cfg: &ExperimentConfig, feature_set: FeatureSet, train: &[EmgRecording]) -> Result<TrainedModel> {
    let spec = cfg.window_spec()?;
    let extractor = cfg.extractor(feature_set)?;
    let channels = train
        .first()
        .ok_or_else(|| Error::InvalidSplit("no training recordings".into()))?
        .channel_count();
    let layout = extractor.layout(channels);

    let per_recording = par::try_map(ExecMode::Parallel, train, |rec| {
        let windows = segment(rec, spec)?;
        windows
            .iter()
            .map(|w| extractor.extract(w).map(|fv| (fv, rec.label())))
            .collect::<Result<Vec<_>>>()
    })?;
    let examples: Vec<(FeatureVector, usize)> = per_recording.into_iter().flatten().collect();
    log::info!(
        "training on {} windows, input dim {}",
        examples.len(),
        layout.len()
    );

    let model = MlpModel::init(layout.len(), cfg.class_count, cfg.seed)?.with_feature_layout(layout.signature());
    let outcome = classifier::train(model, &examples, &cfg.train_config())?;
    Ok(TrainedModel {
        model: outcome.model,
        extractor,
        layout,
        loss_history: outcome.loss_history,
        best_epoch: outcome.best_epoch,
        training_windows: examples.len(),
    })
}

/// Posteriors of the first windows of one test recording.
struct RecordingEval {
    label: usize,
    subject: String,
    posteriors: Vec<ClassPosterior>,
}

fn classify_prefix(trained: &TrainedModel, rec: &EmgRecording, cfg: &ExperimentConfig, max_windows: usize) -> Result<RecordingEval> {
    let windows = segment(rec, cfg.window_spec()?)?;
    if windows.len() < max_windows {
        return Err(Error::RecordingTooShort {
            len: rec.len(),
            window: max_windows,
        });
    }
    let posteriors = windows[..max_windows]
        .iter()
        .map(|w| trained.extractor.extract(w).and_then(|fv| trained.model.forward(&fv)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecordingEval {
        label: rec.label(),
        subject: rec.subject_id().to_string(),
        posteriors,
    })
}

fn pct(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Classifies every test recording, fuses the first `n` window posteriors for
/// each configured signal length and method, and scores the decisions.
pub fn evaluate(cfg: &ExperimentConfig, trained: &TrainedModel, test: &[EmgRecording]) -> Result<ExperimentReport> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::InvalidSplit("no test recordings".into()));
    }
    let classes = trained.model.class_count();
    let lengths: Vec<(f64, usize)> = cfg
        .signal_lengths_ms
        .iter()
        .map(|&l| cfg.windows_for_length(l).map(|n| (l, n)))
        .collect::<Result<_>>()?;
    let max_windows = lengths.iter().map(|&(_, n)| n).max().expect("non-empty lengths");

    let evals = par::try_map(ExecMode::Parallel, test, |rec| classify_prefix(trained, rec, cfg, max_windows))?;

    let mut subjects: Vec<String> = evals.iter().map(|e| e.subject.clone()).collect();
    subjects.sort();
    subjects.dedup();

    let mut accuracy = Vec::new();
    let mut per_subject = Vec::new();
    let mut window_accuracy = Vec::new();
    let mut per_class = Vec::new();
    let mut confusion = Vec::new();
    let mut roc_scores: Vec<(usize, Vec<f64>)> = Vec::new();

    for &(length_ms, n) in &lengths {
        let window_hits: usize = evals
            .iter()
            .map(|e| e.posteriors[..n].iter().filter(|p| p.argmax() + 1 == e.label).count())
            .sum();
        window_accuracy.push((length_ms, pct(window_hits, evals.len() * n)));

        for &method in &cfg.fusion_methods {
            // A product rule that rules out every class yields no decision,
            // which is scored as a miss.
            let decisions: Vec<Option<usize>> = evals
                .iter()
                .map(|e| match fusion::fuse(method, &e.posteriors[..n], cfg.bayes_epsilon) {
                    Ok(d) => Ok(Some(d.chosen_class)),
                    Err(Error::DegeneratePosteriors) => Ok(None),
                    Err(other) => Err(other),
                })
                .collect::<Result<_>>()?;
            let correct = evals.iter().zip(&decisions).filter(|(e, d)| **d == Some(e.label)).count();
            accuracy.push(AccuracyRow {
                method,
                length_ms,
                windows: n,
                correct,
                total: evals.len(),
                accuracy_pct: pct(correct, evals.len()),
            });
            for subject in &subjects {
                let (c, t) = evals
                    .iter()
                    .zip(&decisions)
                    .filter(|(e, _)| &e.subject == subject)
                    .fold((0, 0), |(c, t), (e, d)| (c + usize::from(*d == Some(e.label)), t + 1));
                per_subject.push(SubjectRow {
                    method,
                    length_ms,
                    subject: subject.clone(),
                    correct: c,
                    total: t,
                    accuracy_pct: pct(c, t),
                });
            }
            if length_ms == cfg.report_length_ms {
                // last column counts undecided recordings
                let mut matrix = vec![vec![0usize; classes + 1]; classes];
                for (e, d) in evals.iter().zip(&decisions) {
                    matrix[e.label - 1][d.map_or(classes, |d| d - 1)] += 1;
                }
                for (k, row) in matrix.iter().enumerate() {
                    let total: usize = row.iter().sum();
                    per_class.push(PerClassRow {
                        method,
                        class: k + 1,
                        correct: row[k],
                        total,
                        accuracy_pct: pct(row[k], total),
                    });
                }
                confusion.push((method, matrix));
            }
        }

        if length_ms == cfg.report_length_ms {
            for e in &evals {
                let d = fusion::fuse_sum(&e.posteriors[..n])?;
                let normalized = d.scores.iter().map(|s| s / n as f64).collect();
                roc_scores.push((e.label, normalized));
            }
        }
    }

    Ok(ExperimentReport {
        feature_set: trained.feature_set(),
        input_dim: trained.layout.len(),
        class_count: classes,
        test_recordings: evals.len(),
        training_windows: trained.training_windows,
        epochs_run: trained.loss_history.len(),
        best_epoch: trained.best_epoch,
        final_training_loss: trained.loss_history.last().copied(),
        report_length_ms: cfg.report_length_ms,
        accuracy,
        window_accuracy,
        per_subject,
        per_class,
        confusion,
        roc: roc_curves(&roc_scores, classes),
        latency: None,
        config_text: cfg.to_text(),
        seed: cfg.seed,
    })
}

/// Trains on the training split, evaluates on the test split, and times the
/// per-decision stages on the first test recording.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let split = prepare(cfg)?;
    run_on_split(cfg, cfg.feature_set, &split)
}

fn run_on_split(cfg: &ExperimentConfig, feature_set: FeatureSet, split: &DatasetSplit) -> Result<ExperimentReport> {
    let trained = train_model(cfg, feature_set, &split.train)?;
    let mut report = evaluate(cfg, &trained, &split.test)?;
    report.latency = Some(bench_latency(cfg, &trained, &split.test[0])?);
    Ok(report)
}

/// Runs the experiment with the conventional kinds only, then with all 17,
/// on the same split and seed.
pub fn feature_condition_sweep(cfg: &ExperimentConfig) -> Result<[ExperimentReport; 2]> {
    let split = prepare(cfg)?;
    let conventional = run_on_split(cfg, FeatureSet::Conventional, &split)?;
    let all = run_on_split(cfg, FeatureSet::All, &split)?;
    Ok([conventional, all])
}
