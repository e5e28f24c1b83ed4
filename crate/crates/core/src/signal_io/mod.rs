//! Recordings, windowing and train/test splitting.

mod csv_io;
mod synthetic;

use std::collections::BTreeSet;

pub use csv_io::{load_recordings, read_recordings, write_recordings, CsvSchema};
pub use synthetic::{generate_synthetic, ClassProfile, SyntheticSpec, DEFAULT_BANDS_HZ};

use crate::error::{Error, Result};

/// Sample rate of the reference recordings.
pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 4000.0;

/// A multi-channel recording of one gesture trial.
///
/// Channels share one length and every sample is finite; both are checked on
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmgRecording {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    label: usize,
    subject_id: String,
    trial_index: u32,
}

impl EmgRecording {
    pub fn new(
        channels: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        label: usize,
        subject_id: impl Into<String>,
        trial_index: u32,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if channels.is_empty() {
            return Err(Error::InvalidRecording("no channels".into()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::InvalidRecording("empty channel".into()));
        }
        if let Some(c) = channels.iter().position(|ch| ch.len() != len) {
            return Err(Error::InvalidRecording(format!(
                "channel {} has {} samples, channel 1 has {len}",
                c + 1,
                channels[c].len()
            )));
        }
        for (c, ch) in channels.iter().enumerate() {
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidRecording(format!(
                    "non-finite sample at index {i} of channel {}",
                    c + 1
                )));
            }
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidRecording(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if label == 0 {
            return Err(Error::InvalidRecording("labels start at 1".into()));
        }
        if trial_index == 0 {
            return Err(Error::InvalidRecording("trial indices start at 1".into()));
        }
        Ok(Self {
            channels,
            sample_rate_hz,
            label,
            subject_id,
            trial_index,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn trial_index(&self) -> u32 {
        self.trial_index
    }

    /// Returns a copy with every sample passed through `f`. Metadata is kept.
    pub fn map_samples(&self, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .map(|ch| ch.iter().map(|&v| f(v)).collect())
            .collect();
        Self::new(
            channels,
            self.sample_rate_hz,
            self.label,
            self.subject_id.clone(),
            self.trial_index,
        )
    }

    /// Returns a copy truncated to its first `len` samples.
    pub fn prefix(&self, len: usize) -> Result<Self> {
        let len = len.min(self.len());
        Self::new(
            self.channels.iter().map(|ch| ch[..len].to_vec()).collect(),
            self.sample_rate_hz,
            self.label,
            self.subject_id.clone(),
            self.trial_index,
        )
    }
}

/// Window length and hop, in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    window_len: usize,
    stride: usize,
}

impl WindowSpec {
    pub fn new(window_len: usize, stride: usize) -> Result<Self> {
        if window_len == 0 || stride == 0 {
            return Err(Error::InvalidWindowSpec(
                "window length and stride must be positive".into(),
            ));
        }
        if stride > window_len {
            return Err(Error::InvalidWindowSpec(format!(
                "stride {stride} exceeds window length {window_len}"
            )));
        }
        Ok(Self { window_len, stride })
    }

    /// Builds a spec from millisecond durations; both must land on whole samples.
    pub fn from_ms(window_ms: f64, overlap_ms: f64, sample_rate_hz: f64) -> Result<Self> {
        if !(overlap_ms >= 0.0 && overlap_ms < window_ms) {
            return Err(Error::InvalidWindowSpec(format!(
                "overlap {overlap_ms} ms must be in [0, window {window_ms} ms)"
            )));
        }
        let window = ms_to_samples(window_ms, sample_rate_hz)?;
        let overlap = ms_to_samples(overlap_ms, sample_rate_hz)?;
        Self::new(window, window - overlap)
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn overlap(&self) -> usize {
        self.window_len - self.stride
    }

    /// Number of full windows in a signal of `len` samples; trailing samples
    /// that cannot fill a window are dropped.
    pub fn count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.stride + 1
        }
    }
}

/// Converts a duration to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate_hz: f64) -> Result<usize> {
    let exact = ms * sample_rate_hz / 1000.0;
    let rounded = exact.round();
    if !exact.is_finite() || exact < 0.0 || (exact - rounded).abs() > 1e-6 {
        return Err(Error::InvalidWindowSpec(format!(
            "{ms} ms at {sample_rate_hz} Hz is not a whole number of samples"
        )));
    }
    Ok(rounded as usize)
}

/// A view of one window of a recording.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    recording: &'a EmgRecording,
    start: usize,
    len: usize,
}

impl<'a> Window<'a> {
    pub fn channel(&self, c: usize) -> &'a [f64] {
        &self.recording.channels[c][self.start..self.start + self.len]
    }

    pub fn channels(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (start, len) = (self.start, self.len);
        self.recording
            .channels
            .iter()
            .map(move |ch| &ch[start..start + len])
    }

    pub fn channel_count(&self) -> usize {
        self.recording.channel_count()
    }

    pub fn start_sample(&self) -> usize {
        self.start
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn label(&self) -> usize {
        self.recording.label
    }

    pub fn subject_id(&self) -> &'a str {
        &self.recording.subject_id
    }

    pub fn trial_index(&self) -> u32 {
        self.recording.trial_index
    }
}

/// Cuts a recording into full windows starting at 0, stride, 2*stride, ...
pub fn segment<'a>(recording: &'a EmgRecording, spec: WindowSpec) -> Result<Vec<Window<'a>>> {
    let len = recording.len();
    if len < spec.window_len {
        return Err(Error::RecordingTooShort {
            len,
            window: spec.window_len,
        });
    }
    Ok((0..spec.count(len))
        .map(|i| Window {
            recording,
            start: i * spec.stride,
            len: spec.window_len,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<EmgRecording>,
    pub test: Vec<EmgRecording>,
    /// Recordings whose trial was in neither set.
    pub dropped: usize,
}

/// Assigns recordings to train or test by trial index.
pub fn split_by_trial(
    recordings: Vec<EmgRecording>,
    train_trials: &BTreeSet<u32>,
    test_trials: &BTreeSet<u32>,
) -> Result<DatasetSplit> {
    if let Some(t) = train_trials.intersection(test_trials).next() {
        return Err(Error::InvalidSplit(format!(
            "trial {t} is in both train and test sets"
        )));
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        test: Vec::new(),
        dropped: 0,
    };
    for rec in recordings {
        if train_trials.contains(&rec.trial_index) {
            split.train.push(rec);
        } else if test_trials.contains(&rec.trial_index) {
            split.test.push(rec);
        } else {
            split.dropped += 1;
        }
    }
    if split.dropped > 0 {
        log::warn!(
            "{} recording(s) in neither train nor test trials were dropped",
            split.dropped
        );
    }
    if split.train.is_empty() {
        return Err(Error::InvalidSplit("train partition is empty".into()));
    }
    if split.test.is_empty() {
        return Err(Error::InvalidSplit("test partition is empty".into()));
    }
    Ok(split)
}
