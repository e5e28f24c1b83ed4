//! Experiment configuration and its flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so an empty file is a valid configuration. Lists are
//! comma-separated.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::classifier::{TrainConfig, DEFAULT_CLASS_COUNT};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureParams, FeatureSet, SubbandMode, Threshold};
use crate::fusion::FusionMethod;
use crate::signal_io::{ms_to_samples, SyntheticSpec, WindowSpec, DEFAULT_SAMPLE_RATE_HZ};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic,
}

/// Knobs of the synthetic data source; the class profiles come from
/// [`SyntheticSpec::emg_like`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub subjects: usize,
    pub trials_per_class: u32,
    pub duration_samples: usize,
    pub noise_std: f64,
    pub gain_jitter: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        let base = SyntheticSpec::emg_like(DEFAULT_CLASS_COUNT, 2, 0);
        Self {
            subjects: base.subjects,
            trials_per_class: base.trials_per_class,
            duration_samples: base.duration_samples,
            noise_std: base.noise_std,
            gain_jitter: base.gain_jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub synthetic: SyntheticOptions,
    /// Channels generated by the synthetic source.
    pub channels: usize,
    pub class_count: usize,
    pub sample_rate_hz: f64,
    pub window_ms: f64,
    pub overlap_ms: f64,
    pub levels: usize,
    pub subbands: SubbandMode,
    pub feature_set: FeatureSet,
    pub feature_params: FeatureParams,
    pub train_trials: BTreeSet<u32>,
    pub test_trials: BTreeSet<u32>,
    pub train: TrainConfig,
    pub fusion_methods: Vec<FusionMethod>,
    /// Smoothing added to probabilities in the product rule.
    pub bayes_epsilon: f64,
    pub signal_lengths_ms: Vec<f64>,
    /// Signal length used for per-class accuracy, confusion and ROC.
    pub report_length_ms: f64,
    /// Signal length timed by the latency benchmark.
    pub bench_length_ms: f64,
    pub bench_repetitions: usize,
    pub bench_warmup: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic,
            synthetic: SyntheticOptions::default(),
            channels: 2,
            class_count: DEFAULT_CLASS_COUNT,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            window_ms: 100.0,
            overlap_ms: 50.0,
            levels: 2,
            subbands: SubbandMode::DetailsPlusApprox,
            feature_set: FeatureSet::All,
            feature_params: FeatureParams::default(),
            train_trials: (1..=4).collect(),
            test_trials: [5, 6].into(),
            train: TrainConfig::default(),
            fusion_methods: FusionMethod::ALL.to_vec(),
            bayes_epsilon: 0.0,
            signal_lengths_ms: vec![300.0, 550.0, 800.0, 1050.0, 1300.0, 1550.0, 1800.0, 2050.0],
            report_length_ms: 800.0,
            bench_length_ms: 800.0,
            bench_repetitions: 200,
            bench_warmup: 20,
            seed: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Reads a config file, starting from defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => {
                self.data = match value {
                    "synthetic" => DataSource::Synthetic,
                    v => match v.strip_prefix("csv:") {
                        Some(p) => DataSource::Csv(PathBuf::from(p.trim())),
                        None => {
                            return Err(Error::Config(format!(
                                "`data` must be `synthetic` or `csv:<path>`, got `{v}`"
                            )))
                        }
                    },
                }
            }
            "synthetic.subjects" => self.synthetic.subjects = parse_num(key, value)?,
            "synthetic.trials_per_class" => self.synthetic.trials_per_class = parse_num(key, value)?,
            "synthetic.duration_samples" => self.synthetic.duration_samples = parse_num(key, value)?,
            "synthetic.noise_std" => self.synthetic.noise_std = parse_num(key, value)?,
            "synthetic.gain_jitter" => self.synthetic.gain_jitter = parse_num(key, value)?,
            "channels" => self.channels = parse_num(key, value)?,
            "class_count" => self.class_count = parse_num(key, value)?,
            "sample_rate_hz" => self.sample_rate_hz = parse_num(key, value)?,
            "window_ms" => self.window_ms = parse_num(key, value)?,
            "overlap_ms" => self.overlap_ms = parse_num(key, value)?,
            "levels" => self.levels = parse_num(key, value)?,
            "subbands" => self.subbands = value.parse()?,
            "feature_set" => self.feature_set = value.parse()?,
            "myop_threshold" => self.feature_params.myop_threshold = value.parse::<Threshold>()?,
            "wamp_threshold" => self.feature_params.wamp_threshold = value.parse::<Threshold>()?,
            "ialv_offset" => self.feature_params.ialv_offset = parse_num(key, value)?,
            "ialv_floor" => self.feature_params.ialv_floor = parse_num(key, value)?,
            "train_trials" => self.train_trials = parse_list(key, value)?.into_iter().collect(),
            "test_trials" => self.test_trials = parse_list(key, value)?.into_iter().collect(),
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "patience" => self.train.patience = parse_num(key, value)?,
            "validation_fraction" => self.train.validation_fraction = parse_num(key, value)?,
            "fusion_methods" => {
                self.fusion_methods = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "bayes_epsilon" => self.bayes_epsilon = parse_num(key, value)?,
            "signal_lengths_ms" => self.signal_lengths_ms = parse_list(key, value)?,
            "report_length_ms" => self.report_length_ms = parse_num(key, value)?,
            "bench_length_ms" => self.bench_length_ms = parse_num(key, value)?,
            "bench_repetitions" => self.bench_repetitions = parse_num(key, value)?,
            "bench_warmup" => self.bench_warmup = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// The config in the same text format [`apply_text`](Self::apply_text)
    /// reads; parsing the output reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let data = match &self.data {
            DataSource::Synthetic => "synthetic".to_string(),
            DataSource::Csv(p) => format!("csv:{}", p.display()),
        };
        let p = &self.feature_params;
        let lines: Vec<(&str, String)> = vec![
            ("data", data),
            ("synthetic.subjects", self.synthetic.subjects.to_string()),
            ("synthetic.trials_per_class", self.synthetic.trials_per_class.to_string()),
            ("synthetic.duration_samples", self.synthetic.duration_samples.to_string()),
            ("synthetic.noise_std", self.synthetic.noise_std.to_string()),
            ("synthetic.gain_jitter", self.synthetic.gain_jitter.to_string()),
            ("channels", self.channels.to_string()),
            ("class_count", self.class_count.to_string()),
            ("sample_rate_hz", self.sample_rate_hz.to_string()),
            ("window_ms", self.window_ms.to_string()),
            ("overlap_ms", self.overlap_ms.to_string()),
            ("levels", self.levels.to_string()),
            ("subbands", self.subbands.to_string()),
            ("feature_set", self.feature_set.to_string()),
            ("myop_threshold", p.myop_threshold.to_string()),
            ("wamp_threshold", p.wamp_threshold.to_string()),
            ("ialv_offset", p.ialv_offset.to_string()),
            ("ialv_floor", p.ialv_floor.to_string()),
            ("train_trials", join(&self.train_trials)),
            ("test_trials", join(&self.test_trials)),
            ("epochs", self.train.epochs.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("patience", self.train.patience.to_string()),
            ("validation_fraction", self.train.validation_fraction.to_string()),
            ("fusion_methods", join(&self.fusion_methods)),
            ("bayes_epsilon", self.bayes_epsilon.to_string()),
            ("signal_lengths_ms", join(&self.signal_lengths_ms)),
            ("report_length_ms", self.report_length_ms.to_string()),
            ("bench_length_ms", self.bench_length_ms.to_string()),
            ("bench_repetitions", self.bench_repetitions.to_string()),
            ("bench_warmup", self.bench_warmup.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::from_ms(self.window_ms, self.overlap_ms, self.sample_rate_hz)
    }

    /// Windows fused for a signal of `length_ms`:
    /// `floor((L * fs / 1000 - window) / stride) + 1`.
    pub fn windows_for_length(&self, length_ms: f64) -> Result<usize> {
        let spec = self.window_spec()?;
        let samples = ms_to_samples(length_ms, self.sample_rate_hz)?;
        if samples < spec.window_len() {
            return Err(Error::Config(format!(
                "signal length {length_ms} ms is shorter than one window ({} ms)",
                self.window_ms
            )));
        }
        Ok(spec.count(samples))
    }

    pub fn extractor(&self, feature_set: FeatureSet) -> Result<FeatureExtractor> {
        FeatureExtractor::new(self.levels, self.subbands, feature_set, self.feature_params)
    }

    pub fn synthetic_spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::emg_like(self.class_count, self.channels, self.seed);
        spec.sample_rate_hz = self.sample_rate_hz;
        spec.subjects = self.synthetic.subjects;
        spec.trials_per_class = self.synthetic.trials_per_class;
        spec.duration_samples = self.synthetic.duration_samples;
        spec.noise_std = self.synthetic.noise_std;
        spec.gain_jitter = self.synthetic.gain_jitter;
        spec
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Checks every invariant that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.overlap_ms < self.window_ms) {
            return bad(format!(
                "overlap_ms ({}) must be smaller than window_ms ({})",
                self.overlap_ms, self.window_ms
            ));
        }
        let spec = self.window_spec()?;
        let required = 1usize << self.levels.min(usize::BITS as usize - 1);
        if self.levels == 0 || spec.window_len() % required != 0 {
            return bad(format!(
                "window of {} samples is not divisible by 2^{}",
                spec.window_len(),
                self.levels
            ));
        }
        if self.class_count < 2 {
            return bad("class_count must be at least 2".into());
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.signal_lengths_ms.is_empty() {
            return bad("signal_lengths_ms is empty".into());
        }
        if self.fusion_methods.is_empty() {
            return bad("fusion_methods is empty".into());
        }
        for &len in self.signal_lengths_ms.iter().chain([&self.report_length_ms, &self.bench_length_ms]) {
            if len < self.window_ms {
                return bad(format!("signal length {len} ms is shorter than window_ms"));
            }
            let samples = ms_to_samples(len, self.sample_rate_hz)?;
            if (samples - spec.window_len()) % spec.stride() != 0 {
                return bad(format!("signal length {len} ms is not a whole number of windows"));
            }
        }
        if !self.signal_lengths_ms.contains(&self.report_length_ms) {
            return bad(format!(
                "report_length_ms {} is not one of signal_lengths_ms",
                self.report_length_ms
            ));
        }
        if let Some(t) = self.train_trials.intersection(&self.test_trials).next() {
            return bad(format!("trial {t} is in both train_trials and test_trials"));
        }
        if self.train_trials.is_empty() || self.test_trials.is_empty() {
            return bad("train_trials and test_trials must be non-empty".into());
        }
        if self.bench_repetitions < 100 {
            return bad("bench_repetitions must be at least 100".into());
        }
        if !(self.bayes_epsilon >= 0.0) {
            return bad("bayes_epsilon must be non-negative".into());
        }
        self.feature_params.validate()?;
        self.train.validate()?;
        Ok(())
    }
}
