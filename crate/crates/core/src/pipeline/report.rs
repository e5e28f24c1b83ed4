use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::fusion::FusionMethod;

use super::latency::LatencyStats;

pub const ACCURACY_FILE: &str = "accuracy_by_length.csv";
pub const PER_CLASS_FILE: &str = "per_class_accuracy.csv";
pub const PER_SUBJECT_FILE: &str = "per_subject_accuracy.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const ROC_FILE: &str = "roc.csv";
pub const LATENCY_FILE: &str = "latency.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub method: FusionMethod,
    pub length_ms: f64,
    pub windows: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRow {
    pub method: FusionMethod,
    pub length_ms: f64,
    pub subject: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerClassRow {
    pub method: FusionMethod,
    pub class: usize,
    pub correct: usize,
    pub total: usize,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this value count as positive.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `class_<k>` or `micro`.
    pub name: String,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under the curve.
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }
}

/// ROC curve of `(score, is_positive)` pairs. The first point is (0, 0) at
/// an infinite threshold; each distinct score adds one point.
pub fn roc_curve(name: impl Into<String>, samples: &[(f64, bool)]) -> RocCurve {
    let positives = samples.iter().filter(|s| s.1).count() as f64;
    let negatives = samples.len() as f64 - positives;
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: if negatives > 0.0 { fp / negatives } else { 0.0 },
            tpr: if positives > 0.0 { tp / positives } else { 0.0 },
            threshold,
        });
    }
    RocCurve {
        name: name.into(),
        points,
    }
}

/// One-vs-rest curves per class plus the micro-average, from per-recording
/// `(true label, per-class score)` pairs.
pub fn roc_curves(scores: &[(usize, Vec<f64>)], classes: usize) -> Vec<RocCurve> {
    let mut curves: Vec<RocCurve> = (0..classes)
        .map(|k| {
            let samples: Vec<(f64, bool)> = scores.iter().map(|(label, s)| (s[k], *label == k + 1)).collect();
            roc_curve(format!("class_{}", k + 1), &samples)
        })
        .collect();
    let pooled: Vec<(f64, bool)> = scores
        .iter()
        .flat_map(|(label, s)| s.iter().enumerate().map(move |(k, &v)| (v, *label == k + 1)))
        .collect();
    curves.push(roc_curve("micro", &pooled));
    curves
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub feature_set: FeatureSet,
    pub input_dim: usize,
    pub class_count: usize,
    pub test_recordings: usize,
    pub training_windows: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub final_training_loss: Option<f64>,
    pub report_length_ms: f64,
    /// One row per (signal length, method), lengths outermost.
    pub accuracy: Vec<AccuracyRow>,
    /// Accuracy of individual windows within each signal-length prefix.
    pub window_accuracy: Vec<(f64, f64)>,
    pub per_subject: Vec<SubjectRow>,
    /// At `report_length_ms`.
    pub per_class: Vec<PerClassRow>,
    /// At `report_length_ms`; rows are true classes, columns predicted
    /// classes plus a trailing "undecided" column.
    pub confusion: Vec<(FusionMethod, Vec<Vec<usize>>)>,
    /// At `report_length_ms`, from sum-rule scores divided by the window count.
    pub roc: Vec<RocCurve>,
    pub latency: Option<LatencyStats>,
    pub config_text: String,
    pub seed: u64,
}

impl ExperimentReport {
    pub fn accuracy_at(&self, method: FusionMethod, length_ms: f64) -> Option<f64> {
        self.accuracy
            .iter()
            .find(|r| r.method == method && r.length_ms == length_ms)
            .map(|r| r.accuracy_pct)
    }

    /// Mean accuracy across signal lengths for one method.
    pub fn mean_accuracy(&self, method: FusionMethod) -> Option<f64> {
        let rows: Vec<f64> = self
            .accuracy
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.accuracy_pct)
            .collect();
        (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
    }
}

fn fmt_ms(v: f64) -> String {
    format!("{v}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes the report files into `out_dir`, one row block per report. Returns
/// the paths written.
pub fn emit_report(reports: &[ExperimentReport], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(ACCURACY_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "feature_set", "length_ms", "accuracy_pct"])?;
    for r in reports {
        for row in &r.accuracy {
            w.write_record([
                row.method.to_string(),
                r.feature_set.to_string(),
                fmt_ms(row.length_ms),
                format!("{:.4}", row.accuracy_pct),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(PER_CLASS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "feature_set", "length_ms", "class", "correct", "total", "accuracy_pct"])?;
    for r in reports {
        for row in &r.per_class {
            w.write_record([
                row.method.to_string(),
                r.feature_set.to_string(),
                fmt_ms(r.report_length_ms),
                row.class.to_string(),
                row.correct.to_string(),
                row.total.to_string(),
                format!("{:.4}", row.accuracy_pct),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(PER_SUBJECT_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "feature_set", "length_ms", "subject", "correct", "total", "accuracy_pct"])?;
    for r in reports {
        for row in &r.per_subject {
            w.write_record([
                row.method.to_string(),
                r.feature_set.to_string(),
                fmt_ms(row.length_ms),
                row.subject.clone(),
                row.correct.to_string(),
                row.total.to_string(),
                format!("{:.4}", row.accuracy_pct),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(CONFUSION_FILE);
    let mut w = csv_writer(&path)?;
    let classes = reports.first().map_or(0, |r| r.class_count);
    let mut header = vec!["method".to_string(), "feature_set".into(), "length_ms".into(), "true_class".into()];
    header.extend((1..=classes).map(|k| format!("pred_{k}")));
    header.push("undecided".into());
    w.write_record(&header)?;
    for r in reports {
        for (method, matrix) in &r.confusion {
            for (k, row) in matrix.iter().enumerate() {
                let mut rec = vec![
                    method.to_string(),
                    r.feature_set.to_string(),
                    fmt_ms(r.report_length_ms),
                    (k + 1).to_string(),
                ];
                rec.extend(row.iter().map(|c| c.to_string()));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(ROC_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["feature_set", "curve", "fpr", "tpr", "threshold"])?;
    for r in reports {
        for curve in &r.roc {
            for p in &curve.points {
                let threshold = if p.threshold.is_infinite() {
                    "inf".to_string()
                } else {
                    format!("{:?}", p.threshold)
                };
                w.write_record([
                    r.feature_set.to_string(),
                    curve.name.clone(),
                    format!("{:?}", p.fpr),
                    format!("{:?}", p.tpr),
                    threshold,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(LATENCY_FILE);
    let mut w = csv_writer(&path)?;
    super::latency::write_latency_header(&mut w)?;
    for r in reports {
        if let Some(lat) = &r.latency {
            super::latency::write_latency_rows(&mut w, r.feature_set, lat)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary(reports)).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    Ok(written)
}

/// Human-readable digest of one or more reports.
pub fn summary(reports: &[ExperimentReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "== feature set: {} (input dim {})", r.feature_set, r.input_dim);
        let _ = writeln!(
            s,
            "training windows: {}, epochs run: {}, best epoch: {}, final training loss: {}",
            r.training_windows,
            r.epochs_run,
            r.best_epoch,
            r.final_training_loss.map_or("n/a".into(), |l| format!("{l:.5}"))
        );
        let _ = writeln!(s, "test recordings: {}", r.test_recordings);
        let mut lengths: Vec<f64> = r.accuracy.iter().map(|a| a.length_ms).collect();
        lengths.dedup();
        let mut methods: Vec<FusionMethod> = Vec::new();
        for a in &r.accuracy {
            if !methods.contains(&a.method) {
                methods.push(a.method);
            }
        }
        let _ = write!(s, "\naccuracy (%)   ");
        for l in &lengths {
            let _ = write!(s, "{:>8}", format!("{l}ms"));
        }
        let _ = writeln!(s);
        for m in &methods {
            let _ = write!(s, "{:<15}", m.name());
            for l in &lengths {
                let _ = write!(s, "{:>8.1}", r.accuracy_at(*m, *l).unwrap_or(f64::NAN));
            }
            let _ = writeln!(s);
        }
        let _ = write!(s, "{:<15}", "single window");
        for (_, acc) in &r.window_accuracy {
            let _ = write!(s, "{acc:>8.1}");
        }
        let _ = writeln!(s);

        let _ = writeln!(s, "\nper-class accuracy at {} ms:", r.report_length_ms);
        for m in &methods {
            let row: Vec<String> = r
                .per_class
                .iter()
                .filter(|p| p.method == *m)
                .map(|p| format!("{}:{:.0}", p.class, p.accuracy_pct))
                .collect();
            let _ = writeln!(s, "  {:<10} {}", m.name(), row.join(" "));
        }
        if let Some(micro) = r.roc.iter().find(|c| c.name == "micro") {
            let _ = writeln!(s, "\nmicro-average ROC AUC (sum rule): {:.4}", micro.auc());
        }
        if let Some(lat) = &r.latency {
            let _ = writeln!(s, "\nlatency over {} windows, {} repetitions:", lat.windows, lat.repetitions);
            for st in &lat.stages {
                let _ = writeln!(
                    s,
                    "  {:<20} mean {:.4} ms  p95 {:.4} ms  (per window mean {:.4} ms)",
                    st.stage, st.mean_ms, st.p95_ms, st.per_window_mean_ms
                );
            }
        }
        let _ = writeln!(s);
    }
    if let Some(r) = reports.first() {
        let _ = writeln!(s, "== config (seed {})", r.seed);
        s.push_str(&r.config_text);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_of_perfect_and_inverted_scores() {
        let perfect = roc_curve("p", &[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]);
        assert_eq!(perfect.auc(), 1.0);
        assert_eq!(perfect.points.first().unwrap().threshold, f64::INFINITY);
        let last = perfect.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));

        let inverted = roc_curve("i", &[(0.1, true), (0.9, false)]);
        assert_eq!(inverted.auc(), 0.0);

        let tied = roc_curve("t", &[(0.5, true), (0.5, false)]);
        assert_eq!(tied.points.len(), 2);
        assert_eq!(tied.auc(), 0.5);
    }

    #[test]
    fn one_vs_rest_plus_micro() {
        let scores = vec![(1, vec![0.7, 0.2, 0.1]), (2, vec![0.1, 0.8, 0.1]), (3, vec![0.3, 0.3, 0.4])];
        let curves = roc_curves(&scores, 3);
        let names: Vec<&str> = curves.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["class_1", "class_2", "class_3", "micro"]);
        assert!(curves.iter().all(|c| c.auc() == 1.0));
    }
}
