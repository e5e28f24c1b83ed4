//! Labelled synthetic EMG-like recordings.
//!
//! Each class owns a per-channel gain over a fixed set of frequency bands and
//! a burst envelope (rate and depth). A band contributes a handful of tones
//! drawn from a 10 Hz grid with random phases, so the band energy is set by
//! the class while the waveform differs trial to trial. Gaussian noise and a
//! per-trial gain jitter supply within-class spread.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::EmgRecording;
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};

/// Default band edges in Hz. At 4 kHz these straddle the Haar sub-bands
/// (A2 below 500 Hz, D2 500-1000 Hz, D1 above 1000 Hz).
pub const DEFAULT_BANDS_HZ: [(f64, f64); 5] = [
    (20.0, 150.0),
    (150.0, 450.0),
    (550.0, 950.0),
    (1050.0, 1450.0),
    (1550.0, 1950.0),
];

const TONE_GRID_HZ: f64 = 10.0;
const TONES_PER_BAND: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    /// `band_gains[channel][band]`, amplitude of each band's tone group.
    pub band_gains: Vec<Vec<f64>>,
    pub burst_rate_hz: f64,
    /// Fraction of amplitude removed at envelope troughs, in [0, 1).
    pub burst_depth: f64,
}

impl ClassProfile {
    /// A profile with equal gain in every band and no bursts.
    pub fn constant(channels: usize, bands: usize, gain: f64) -> Self {
        Self {
            band_gains: vec![vec![gain; bands]; channels],
            burst_rate_hz: 0.0,
            burst_depth: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub duration_samples: usize,
    pub subjects: usize,
    pub trials_per_class: u32,
    pub bands_hz: Vec<(f64, f64)>,
    /// One profile per class, in label order.
    pub profiles: Vec<ClassProfile>,
    pub noise_std: f64,
    /// Relative spread of the per-trial, per-channel gain.
    pub gain_jitter: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// A 5-second, 4 kHz dataset with `class_count` gestures and the default
    /// band layout. The last class is a blend of two others with a deeper
    /// burst envelope, which makes it the hardest to separate.
    pub fn emg_like(class_count: usize, channels: usize, seed: u64) -> Self {
        let bands = DEFAULT_BANDS_HZ.to_vec();
        let profiles = default_profiles(class_count, channels, bands.len());
        Self {
            class_count,
            channels,
            sample_rate_hz: 4000.0,
            duration_samples: 20_000,
            subjects: 1,
            trials_per_class: 6,
            bands_hz: bands,
            profiles,
            noise_std: 0.5,
            gain_jitter: 0.15,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidSynthetic(m));
        if self.class_count < 2 {
            return fail(format!("class_count must be at least 2, got {}", self.class_count));
        }
        if self.channels == 0 || self.duration_samples == 0 || self.subjects == 0 {
            return fail("channels, duration and subjects must be positive".into());
        }
        if self.trials_per_class == 0 {
            return fail("trials_per_class must be positive".into());
        }
        if !(self.sample_rate_hz > 0.0) {
            return fail("sample rate must be positive".into());
        }
        if !(self.noise_std >= 0.0) || !(self.gain_jitter >= 0.0 && self.gain_jitter < 1.0) {
            return fail("noise_std must be >= 0 and gain_jitter in [0, 1)".into());
        }
        if self.profiles.len() != self.class_count {
            return fail(format!(
                "{} profiles for {} classes",
                self.profiles.len(),
                self.class_count
            ));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for &(lo, hi) in &self.bands_hz {
            if !(lo > 0.0 && lo < hi && hi < nyquist) {
                return fail(format!("band ({lo}, {hi}) Hz must lie inside (0, {nyquist})"));
            }
        }
        for (k, p) in self.profiles.iter().enumerate() {
            if p.band_gains.len() != self.channels
                || p.band_gains.iter().any(|g| g.len() != self.bands_hz.len())
            {
                return fail(format!("profile {} does not match channels x bands", k + 1));
            }
            if !(0.0..1.0).contains(&p.burst_depth) || !(p.burst_rate_hz >= 0.0) {
                return fail(format!("profile {} has an invalid burst envelope", k + 1));
            }
        }
        Ok(())
    }
}

fn default_profiles(class_count: usize, channels: usize, bands: usize) -> Vec<ClassProfile> {
    const BASE: f64 = 0.12;
    const PEAK: f64 = 0.55;
    const RATES: [f64; 5] = [1.5, 2.5, 3.5, 4.5, 5.5];
    let distinct = if class_count > 2 {
        class_count - 1
    } else {
        class_count
    };
    let mut profiles: Vec<ClassProfile> = (0..distinct)
        .map(|k| {
            let band_gains = (0..channels)
                .map(|c| {
                    // Each channel peaks in a different band; the pair of
                    // peaks identifies the class.
                    let peak = (k + c * (1 + k / bands)) % bands;
                    (0..bands)
                        .map(|b| if b == peak { PEAK } else { BASE })
                        .collect()
                })
                .collect();
            ClassProfile {
                band_gains,
                burst_rate_hz: RATES[k % RATES.len()],
                burst_depth: 0.3,
            }
        })
        .collect();
    if class_count > 2 {
        let a = &profiles[distinct - 1];
        let b = &profiles[distinct / 2];
        let band_gains = a
            .band_gains
            .iter()
            .zip(&b.band_gains)
            .map(|(ga, gb)| ga.iter().zip(gb).map(|(x, y)| 0.5 * (x + y)).collect())
            .collect();
        profiles.push(ClassProfile {
            band_gains,
            burst_rate_hz: 3.0,
            burst_depth: 0.6,
        });
    }
    profiles
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Generates `subjects x class_count x trials_per_class` recordings, ordered
/// by subject, then label, then trial. Output is a pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<EmgRecording>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize, u32)> = (0..spec.subjects)
        .flat_map(|s| {
            (1..=spec.class_count)
                .flat_map(move |label| (1..=spec.trials_per_class).map(move |t| (s, label, t)))
        })
        .collect();
    par::try_map(ExecMode::Parallel, &jobs, |&(s, label, trial)| {
        generate_one(spec, s, label, trial)
    })
}

fn generate_one(spec: &SyntheticSpec, subject: usize, label: usize, trial: u32) -> Result<EmgRecording> {
    let fs = spec.sample_rate_hz;
    let profile = &spec.profiles[label - 1];

    let mut subject_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[spec.seed, subject as u64, 0]));
    let subject_gain: Vec<f64> = (0..spec.channels)
        .map(|_| subject_rng.random_range(0.85..1.15))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
        spec.seed,
        subject as u64,
        label as u64,
        trial as u64,
    ]));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let burst_phase = rng.random_range(0.0..2.0 * PI);

    let envelope: Vec<f64> = (0..spec.duration_samples)
        .map(|n| {
            let t = n as f64 / fs;
            let trough = 0.5 - 0.5 * (2.0 * PI * profile.burst_rate_hz * t + burst_phase).cos();
            1.0 - profile.burst_depth * trough
        })
        .collect();

    let mut channels = Vec::with_capacity(spec.channels);
    for c in 0..spec.channels {
        let jitter = if spec.gain_jitter > 0.0 {
            rng.random_range(1.0 - spec.gain_jitter..1.0 + spec.gain_jitter)
        } else {
            1.0
        };
        let gain = subject_gain[c] * jitter;
        let mut tones: Vec<(f64, f64, f64)> = Vec::new();
        for (b, &(lo, hi)) in spec.bands_hz.iter().enumerate() {
            let amp = profile.band_gains[c][b] / (TONES_PER_BAND as f64).sqrt();
            let first = (lo / TONE_GRID_HZ).ceil() as u64;
            let last = (hi / TONE_GRID_HZ).floor() as u64;
            for _ in 0..TONES_PER_BAND {
                let f = rng.random_range(first..=last) as f64 * TONE_GRID_HZ;
                let phase = rng.random_range(0.0..2.0 * PI);
                tones.push((2.0 * PI * f / fs, phase, amp));
            }
        }
        let samples: Vec<f64> = (0..spec.duration_samples)
            .map(|n| {
                let s: f64 = tones
                    .iter()
                    .map(|&(w, phase, amp)| amp * (w * n as f64 + phase).sin())
                    .sum();
                let mut v = gain * envelope[n] * s;
                if spec.noise_std > 0.0 {
                    v += spec.noise_std * noise.sample(&mut rng);
                }
                v
            })
            .collect();
        channels.push(samples);
    }
    EmgRecording::new(channels, fs, label, format!("s{}", subject + 1), trial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{segment, WindowSpec};

    fn small(seed: u64) -> SyntheticSpec {
        let mut spec = SyntheticSpec::emg_like(10, 2, seed);
        spec.duration_samples = 2000;
        spec
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small(42)).unwrap();
        let b = generate_synthetic(&small(42)).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            for (cx, cy) in x.channels().iter().zip(y.channels()) {
                assert!(cx.iter().zip(cy).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
        let c = generate_synthetic(&small(43)).unwrap();
        assert_ne!(a[0].channels(), c[0].channels());
    }

    #[test]
    fn count_per_subject() {
        let mut spec = small(1);
        spec.subjects = 2;
        let recs = generate_synthetic(&spec).unwrap();
        assert_eq!(recs.len(), 120);
        assert_eq!(recs.iter().filter(|r| r.subject_id() == "s1").count(), 60);
        for label in 1..=10 {
            let trials: Vec<u32> = recs
                .iter()
                .filter(|r| r.subject_id() == "s2" && r.label() == label)
                .map(|r| r.trial_index())
                .collect();
            assert_eq!(trials, vec![1, 2, 3, 4, 5, 6]);
        }
    }

    #[test]
    fn noiseless_constant_profile_has_constant_window_rms() {
        let mut spec = small(7);
        spec.class_count = 2;
        spec.noise_std = 0.0;
        spec.gain_jitter = 0.0;
        spec.profiles = vec![ClassProfile::constant(2, spec.bands_hz.len(), 0.4); 2];
        let recs = generate_synthetic(&spec).unwrap();
        let windows = segment(&recs[0], WindowSpec::new(400, 200).unwrap()).unwrap();
        for c in 0..2 {
            let rms: Vec<f64> = windows
                .iter()
                .map(|w| {
                    let x = w.channel(c);
                    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
                })
                .collect();
            for r in &rms {
                assert!((r - rms[0]).abs() < 1e-9, "{r} vs {}", rms[0]);
            }
            assert!(rms[0] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = small(0);
        spec.class_count = 1;
        spec.profiles.truncate(1);
        assert!(matches!(generate_synthetic(&spec), Err(Error::InvalidSynthetic(_))));

        let mut spec = small(0);
        spec.noise_std = -1.0;
        assert!(generate_synthetic(&spec).is_err());

        let mut spec = small(0);
        spec.profiles.pop();
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn default_profiles_are_distinct() {
        let spec = SyntheticSpec::emg_like(10, 2, 0);
        for i in 0..10 {
            for j in i + 1..10 {
                assert_ne!(spec.profiles[i], spec.profiles[j], "{i} {j}");
            }
        }
    }
}
