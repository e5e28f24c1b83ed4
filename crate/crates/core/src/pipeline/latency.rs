use std::time::Instant;

use crate::error::{Error, Result};
use crate::features::{FeatureSet, FeatureVector};
use crate::classifier::ClassPosterior;
use crate::fusion::{self, FusionMethod};
use crate::signal_io::{segment, EmgRecording};

use super::config::ExperimentConfig;
use super::experiment::TrainedModel;

pub const STAGE_FEATURES: &str = "feature_extraction";
pub const STAGE_CLASSIFICATION: &str = "classification";
pub const STAGE_FUSION: &str = "fusion";

#[derive(Debug, Clone, PartialEq)]
pub struct StageStats {
    pub stage: &'static str,
    /// Per segment (one decision).
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub per_window_mean_ms: f64,
    pub per_window_p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub length_ms: f64,
    pub windows: usize,
    pub channels: usize,
    pub repetitions: usize,
    pub stages: Vec<StageStats>,
}

impl LatencyStats {
    pub fn stage(&self, name: &str) -> Option<&StageStats> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

fn stats(stage: &'static str, samples: &[f64], windows: usize) -> StageStats {
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let p95 = percentile(samples, 95.0);
    StageStats {
        stage,
        mean_ms: mean,
        p95_ms: p95,
        per_window_mean_ms: mean / windows as f64,
        per_window_p95_ms: p95 / windows as f64,
    }
}

/// Times feature extraction, classification and fusion of the first
/// `bench_length_ms` of `rec`, single-threaded. Warm-up rounds are run and
/// discarded first. Fusion time covers every configured method.
pub fn bench_latency(cfg: &ExperimentConfig, trained: &TrainedModel, rec: &EmgRecording) -> Result<LatencyStats> {
    if cfg.bench_repetitions == 0 {
        return Err(Error::Config("bench_repetitions must be positive".into()));
    }
    let n = cfg.windows_for_length(cfg.bench_length_ms)?;
    let windows = segment(rec, cfg.window_spec()?)?;
    if windows.len() < n {
        return Err(Error::RecordingTooShort { len: rec.len(), window: n });
    }
    let windows = &windows[..n];
    let methods = if cfg.fusion_methods.is_empty() {
        FusionMethod::ALL.to_vec()
    } else {
        cfg.fusion_methods.clone()
    };

    let mut t_feat = Vec::with_capacity(cfg.bench_repetitions);
    let mut t_class = Vec::with_capacity(cfg.bench_repetitions);
    let mut t_fuse = Vec::with_capacity(cfg.bench_repetitions);
    for round in 0..cfg.bench_warmup + cfg.bench_repetitions {
        let start = Instant::now();
        let features = windows
            .iter()
            .map(|w| trained.extractor.extract(w))
            .collect::<Result<Vec<FeatureVector>>>()?;
        let feat = ms(start);

        let start = Instant::now();
        let posteriors = features
            .iter()
            .map(|f| trained.model.forward(f))
            .collect::<Result<Vec<ClassPosterior>>>()?;
        let class = ms(start);

        let start = Instant::now();
        for &m in &methods {
            // A degenerate product-rule result still costs a full pass.
            let _ = std::hint::black_box(fusion::fuse(m, &posteriors, cfg.bayes_epsilon));
        }
        let fuse = ms(start);

        if round >= cfg.bench_warmup {
            t_feat.push(feat);
            t_class.push(class);
            t_fuse.push(fuse);
        }
    }
    Ok(LatencyStats {
        length_ms: cfg.bench_length_ms,
        windows: n,
        channels: rec.channel_count(),
        repetitions: cfg.bench_repetitions,
        stages: vec![
            stats(STAGE_FEATURES, &t_feat, n),
            stats(STAGE_CLASSIFICATION, &t_class, n),
            stats(STAGE_FUSION, &t_fuse, n),
        ],
    })
}

pub(crate) fn write_latency_header<W: std::io::Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record([
        "feature_set", "length_ms", "stage", "unit", "windows", "repetitions", "mean_ms", "p95_ms",
    ])?;
    Ok(())
}

pub(crate) fn write_latency_rows<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    feature_set: FeatureSet,
    lat: &LatencyStats,
) -> Result<()> {
    for st in &lat.stages {
        for (unit, mean, p95) in [
            ("segment", st.mean_ms, st.p95_ms),
            ("window", st.per_window_mean_ms, st.per_window_p95_ms),
        ] {
            w.write_record([
                feature_set.to_string(),
                lat.length_ms.to_string(),
                st.stage.to_string(),
                unit.to_string(),
                lat.windows.to_string(),
                lat.repetitions.to_string(),
                format!("{mean:.6}"),
                format!("{p95:.6}"),
            ])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(percentile(&v, 95.0), 95.0);
        assert_eq!(percentile(&v, 100.0), 100.0);
        assert_eq!(percentile(&[3.0], 95.0), 3.0);
        assert!(percentile(&[], 50.0).is_nan());
    }
}
