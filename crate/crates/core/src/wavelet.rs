//! Orthonormal Haar (db1) discrete wavelet transform.
//!
//! One analysis step maps pairs to `(a + b) / sqrt(2)` and `(a - b) / sqrt(2)`.
//! The transform is orthonormal, so signal energy equals coefficient energy.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

/// Multi-level decomposition of one signal.
///
/// `details[0]` is the finest level (level 1); `approximation` is the coarse
/// branch left after the last level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    details: Vec<Vec<f64>>,
    approximation: Vec<f64>,
    original_len: usize,
}

impl WaveletDecomposition {
    /// Assembles a decomposition from raw coefficients, checking that the
    /// level lengths halve consistently.
    pub fn from_parts(details: Vec<Vec<f64>>, approximation: Vec<f64>) -> Result<Self> {
        if details.is_empty() {
            return Err(Error::Wavelet("at least one level is required".into()));
        }
        let original_len = 2 * details[0].len();
        if original_len == 0 {
            return Err(Error::Wavelet("empty coefficient array".into()));
        }
        let mut expected = details[0].len();
        for (j, d) in details.iter().enumerate() {
            if d.len() != expected {
                return Err(Error::Wavelet(format!(
                    "level {} has {} coefficients, expected {expected}",
                    j + 1,
                    d.len()
                )));
            }
            if j + 1 < details.len() {
                if expected % 2 != 0 {
                    return Err(Error::Wavelet(format!("level {} length {expected} is odd", j + 1)));
                }
                expected /= 2;
            }
        }
        if approximation.len() != expected {
            return Err(Error::Wavelet(format!(
                "approximation has {} coefficients, expected {expected}",
                approximation.len()
            )));
        }
        if details.iter().flatten().chain(&approximation).any(|v| !v.is_finite()) {
            return Err(Error::Wavelet("non-finite coefficient".into()));
        }
        Ok(Self {
            details,
            approximation,
            original_len,
        })
    }

    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Detail coefficients at `level` (1-based).
    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    pub fn details(&self) -> &[Vec<f64>] {
        &self.details
    }

    pub fn approximation(&self) -> &[f64] {
        &self.approximation
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    /// All coefficients, finest detail first, approximation last.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.details.iter().flatten().chain(&self.approximation).copied()
    }
}

/// One analysis step into freshly allocated `(approximation, detail)` arrays.
pub fn haar_step(signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = signal.len() / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    haar_step_into(signal, &mut approx, &mut detail)?;
    Ok((approx, detail))
}

/// One analysis step writing into caller-provided buffers of length `N/2`.
pub fn haar_step_into(signal: &[f64], approx: &mut [f64], detail: &mut [f64]) -> Result<()> {
    if signal.is_empty() {
        return Err(Error::Wavelet("empty signal".into()));
    }
    if signal.len() % 2 != 0 {
        return Err(Error::NotDivisible {
            len: signal.len(),
            required: 2,
            levels: 1,
        });
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("haar_step"));
    }
    let half = signal.len() / 2;
    assert!(approx.len() == half && detail.len() == half, "output buffers must have length N/2");
    for (k, pair) in signal.chunks_exact(2).enumerate() {
        approx[k] = (pair[0] + pair[1]) * FRAC_1_SQRT_2;
        detail[k] = (pair[0] - pair[1]) * FRAC_1_SQRT_2;
    }
    Ok(())
}

/// Decomposes `signal` to `levels` by repeatedly splitting the approximation.
pub fn decompose(signal: &[f64], levels: usize) -> Result<WaveletDecomposition> {
    if levels == 0 {
        return Err(Error::Wavelet("levels must be positive".into()));
    }
    if levels >= usize::BITS as usize {
        return Err(Error::Wavelet(format!("{levels} levels is too deep")));
    }
    let required = 1usize << levels;
    if signal.is_empty() || signal.len() % required != 0 {
        return Err(Error::NotDivisible {
            len: signal.len(),
            required,
            levels,
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = haar_step(&current)?;
        details.push(d);
        current = a;
    }
    Ok(WaveletDecomposition {
        details,
        approximation: current,
        original_len: signal.len(),
    })
}

/// Inverse of [`decompose`].
pub fn reconstruct(decomp: &WaveletDecomposition) -> Result<Vec<f64>> {
    let mut current = decomp.approximation.clone();
    for detail in decomp.details.iter().rev() {
        if detail.len() != current.len() {
            return Err(Error::Wavelet(format!(
                "detail length {} does not match approximation length {}",
                detail.len(),
                current.len()
            )));
        }
        let mut next = Vec::with_capacity(2 * current.len());
        for (&a, &d) in current.iter().zip(detail) {
            next.push((a + d) * FRAC_1_SQRT_2);
            next.push((a - d) * FRAC_1_SQRT_2);
        }
        current = next;
    }
    if current.len() != decomp.original_len {
        return Err(Error::Wavelet(format!(
            "reconstructed {} samples, expected {}",
            current.len(),
            decomp.original_len
        )));
    }
    Ok(current)
}
