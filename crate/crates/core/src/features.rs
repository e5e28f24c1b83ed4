//! Per-sub-band scalar features and the per-window feature vector.
//!
//! Twelve conventional time-domain statistics plus five derivative and
//! exponential/log integrals. Every kind is computed on one coefficient array
//! of a Haar decomposition.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::signal_io::Window;
use crate::wavelet;

/// `exp` overflows `f64` just above 709.78.
pub const EXP_OVERFLOW_GUARD: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    Iemg,
    Mav,
    Ssi,
    Rms,
    Var,
    Myop,
    Wl,
    Damv,
    M2,
    Dvarv,
    Dasdv,
    Wamp,
    Iasd,
    Iatd,
    Ieav,
    Ialv,
    Ie,
}

impl FeatureKind {
    /// Canonical order; this is the layout contract of [`FeatureVector`].
    pub const ALL: [FeatureKind; 17] = [
        FeatureKind::Iemg,
        FeatureKind::Mav,
        FeatureKind::Ssi,
        FeatureKind::Rms,
        FeatureKind::Var,
        FeatureKind::Myop,
        FeatureKind::Wl,
        FeatureKind::Damv,
        FeatureKind::M2,
        FeatureKind::Dvarv,
        FeatureKind::Dasdv,
        FeatureKind::Wamp,
        FeatureKind::Iasd,
        FeatureKind::Iatd,
        FeatureKind::Ieav,
        FeatureKind::Ialv,
        FeatureKind::Ie,
    ];

    pub const CONVENTIONAL: [FeatureKind; 12] = [
        FeatureKind::Iemg,
        FeatureKind::Mav,
        FeatureKind::Ssi,
        FeatureKind::Rms,
        FeatureKind::Var,
        FeatureKind::Myop,
        FeatureKind::Wl,
        FeatureKind::Damv,
        FeatureKind::M2,
        FeatureKind::Dvarv,
        FeatureKind::Dasdv,
        FeatureKind::Wamp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Iemg => "IEMG",
            FeatureKind::Mav => "MAV",
            FeatureKind::Ssi => "SSI",
            FeatureKind::Rms => "RMS",
            FeatureKind::Var => "VAR",
            FeatureKind::Myop => "MYOP",
            FeatureKind::Wl => "WL",
            FeatureKind::Damv => "DAMV",
            FeatureKind::M2 => "M2",
            FeatureKind::Dvarv => "DVARV",
            FeatureKind::Dasdv => "DASDV",
            FeatureKind::Wamp => "WAMP",
            FeatureKind::Iasd => "IASD",
            FeatureKind::Iatd => "IATD",
            FeatureKind::Ieav => "IEAV",
            FeatureKind::Ialv => "IALV",
            FeatureKind::Ie => "IE",
        }
    }

    pub fn is_conventional(self) -> bool {
        (self as usize) < 12
    }

    /// Smallest array length the formula is defined on.
    pub fn min_len(self) -> usize {
        match self {
            FeatureKind::Var
            | FeatureKind::Wl
            | FeatureKind::Damv
            | FeatureKind::M2
            | FeatureKind::Dasdv
            | FeatureKind::Wamp => 2,
            FeatureKind::Dvarv | FeatureKind::Iasd => 3,
            FeatureKind::Iatd => 4,
            _ => 1,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the MYOP/WAMP amplitude threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// A fixed threshold.
    Absolute(f64),
    /// A multiple of the array's population standard deviation, resolved
    /// separately for every sub-band.
    StdFraction(f64),
}

impl Threshold {
    pub fn resolve(self, x: &[f64]) -> f64 {
        match self {
            Threshold::Absolute(t) => t,
            Threshold::StdFraction(k) => k * population_std(x),
        }
    }

    fn is_valid(self) -> bool {
        match self {
            Threshold::Absolute(t) | Threshold::StdFraction(t) => t >= 0.0 && t.is_finite(),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Absolute(t) => write!(f, "abs:{t}"),
            Threshold::StdFraction(k) => write!(f, "std:{k}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("threshold `{s}` is not `abs:<T>` or `std:<k>`"));
        let (tag, value) = s.split_once(':').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        let t = match tag.trim() {
            "abs" => Threshold::Absolute(value),
            "std" => Threshold::StdFraction(value),
            _ => return Err(bad()),
        };
        if !t.is_valid() {
            return Err(Error::InvalidParams(format!("threshold {t} must be non-negative")));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureParams {
    pub myop_threshold: Threshold,
    pub wamp_threshold: Threshold,
    /// Offset added before the logarithm in IALV.
    pub ialv_offset: f64,
    /// Lower clamp on the IALV log argument.
    pub ialv_floor: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            myop_threshold: Threshold::StdFraction(0.2),
            wamp_threshold: Threshold::StdFraction(0.2),
            ialv_offset: 1.0,
            ialv_floor: 1e-12,
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if !self.myop_threshold.is_valid() || !self.wamp_threshold.is_valid() {
            return Err(Error::InvalidParams("thresholds must be non-negative".into()));
        }
        if !(self.ialv_offset > 0.0) || !(self.ialv_floor > 0.0) {
            return Err(Error::InvalidParams(
                "ialv_offset and ialv_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn population_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn check(kind: FeatureKind, x: &[f64]) -> Result<()> {
    if x.len() < kind.min_len() {
        return Err(Error::TooShort {
            kind: kind.name(),
            min: kind.min_len(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(kind.name()));
    }
    Ok(())
}

fn diffs(x: &[f64]) -> impl Iterator<Item = f64> + '_ {
    x.windows(2).map(|w| w[1] - w[0])
}

/// Evaluates one of the twelve conventional kinds.
pub fn conventional_feature(kind: FeatureKind, x: &[f64], params: &FeatureParams) -> Result<f64> {
    if !kind.is_conventional() {
        return Err(Error::InvalidParams(format!("{kind} is not a conventional feature")));
    }
    check(kind, x)?;
    let n = x.len() as f64;
    let abs_sum = || x.iter().map(|v| v.abs()).sum::<f64>();
    let sq_sum = || x.iter().map(|v| v * v).sum::<f64>();
    let diff_sq_sum = || diffs(x).map(|d| d * d).sum::<f64>();
    let diff_abs_sum = || diffs(x).map(f64::abs).sum::<f64>();
    Ok(match kind {
        FeatureKind::Iemg => abs_sum(),
        FeatureKind::Mav => abs_sum() / n,
        FeatureKind::Ssi => sq_sum(),
        FeatureKind::Rms => (sq_sum() / n).sqrt(),
        FeatureKind::Var => sq_sum() / (n - 1.0),
        FeatureKind::Myop => {
            let t = params.myop_threshold.resolve(x);
            x.iter().filter(|v| v.abs() > t).count() as f64 / n
        }
        FeatureKind::Wl => diff_abs_sum(),
        FeatureKind::Damv => diff_abs_sum() / (n - 1.0),
        FeatureKind::M2 => diff_sq_sum(),
        FeatureKind::Dvarv => diff_sq_sum() / (n - 2.0),
        FeatureKind::Dasdv => (diff_sq_sum() / (n - 1.0)).sqrt(),
        FeatureKind::Wamp => {
            let t = params.wamp_threshold.resolve(x);
            diffs(x).filter(|d| d.abs() > t).count() as f64
        }
        _ => unreachable!(),
    })
}

/// Sum of absolute second differences.
pub fn iasd(x: &[f64]) -> Result<f64> {
    check(FeatureKind::Iasd, x)?;
    Ok(x.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .sum())
}

/// Sum of absolute third differences.
pub fn iatd(x: &[f64]) -> Result<f64> {
    check(FeatureKind::Iatd, x)?;
    Ok(x.windows(4)
        .map(|w| (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]).abs())
        .sum())
}

/// Sum of `exp(|x|)`.
pub fn ieav(x: &[f64]) -> Result<f64> {
    check(FeatureKind::Ieav, x)?;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak >= EXP_OVERFLOW_GUARD {
        return Err(Error::Overflow {
            kind: "IEAV",
            value: peak,
            guard: EXP_OVERFLOW_GUARD,
        });
    }
    Ok(x.iter().map(|v| v.abs().exp()).sum())
}

/// Sum of `|log(max(x + T, floor))|`.
pub fn ialv(x: &[f64], params: &FeatureParams) -> Result<f64> {
    check(FeatureKind::Ialv, x)?;
    Ok(x.iter()
        .map(|v| (v + params.ialv_offset).max(params.ialv_floor).ln().abs())
        .sum())
}

/// Sum of `exp(x)`.
pub fn ie(x: &[f64]) -> Result<f64> {
    check(FeatureKind::Ie, x)?;
    let peak = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if peak >= EXP_OVERFLOW_GUARD {
        return Err(Error::Overflow {
            kind: "IE",
            value: peak,
            guard: EXP_OVERFLOW_GUARD,
        });
    }
    Ok(x.iter().map(|v| v.exp()).sum())
}

/// Evaluates any of the 17 kinds.
pub fn feature(kind: FeatureKind, x: &[f64], params: &FeatureParams) -> Result<f64> {
    match kind {
        FeatureKind::Iasd => iasd(x),
        FeatureKind::Iatd => iatd(x),
        FeatureKind::Ieav => ieav(x),
        FeatureKind::Ialv => ialv(x, params),
        FeatureKind::Ie => ie(x),
        conventional => conventional_feature(conventional, x, params),
    }
}

/// Which sub-bands of a decomposition feed the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SubbandMode {
    DetailsOnly,
    #[default]
    DetailsPlusApprox,
}

impl FromStr for SubbandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "details_only" => Ok(SubbandMode::DetailsOnly),
            "details_plus_approx" => Ok(SubbandMode::DetailsPlusApprox),
            other => Err(Error::Config(format!("unknown subband mode `{other}`"))),
        }
    }
}

impl fmt::Display for SubbandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubbandMode::DetailsOnly => "details_only",
            SubbandMode::DetailsPlusApprox => "details_plus_approx",
        })
    }
}

/// Which feature kinds are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FeatureSet {
    Conventional,
    #[default]
    All,
}

impl FeatureSet {
    pub fn kinds(self) -> &'static [FeatureKind] {
        match self {
            FeatureSet::Conventional => &FeatureKind::CONVENTIONAL,
            FeatureSet::All => &FeatureKind::ALL,
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "conventional" => Ok(FeatureSet::Conventional),
            "all" => Ok(FeatureSet::All),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Conventional => "conventional",
            FeatureSet::All => "all",
        })
    }
}

/// Shape of a feature vector: channel-major, then sub-band (D1..DL, then AL),
/// then feature kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub channels: usize,
    pub levels: usize,
    pub subbands: SubbandMode,
    pub feature_set: FeatureSet,
}

impl FeatureLayout {
    pub fn new(channels: usize, levels: usize, subbands: SubbandMode, feature_set: FeatureSet) -> Self {
        Self {
            channels,
            levels,
            subbands,
            feature_set,
        }
    }

    pub fn band_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.levels).map(|j| format!("D{j}")).collect();
        if self.subbands == SubbandMode::DetailsPlusApprox {
            names.push(format!("A{}", self.levels));
        }
        names
    }

    pub fn band_count(&self) -> usize {
        self.levels + usize::from(self.subbands == SubbandMode::DetailsPlusApprox)
    }

    pub fn kinds(&self) -> &'static [FeatureKind] {
        self.feature_set.kinds()
    }

    pub fn len(&self) -> usize {
        self.channels * self.band_count() * self.kinds().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension names `ch{c}_{band}_{kind}` in layout order.
    pub fn names(&self) -> Vec<String> {
        let bands = self.band_names();
        let mut names = Vec::with_capacity(self.len());
        for c in 1..=self.channels {
            for band in &bands {
                for kind in self.kinds() {
                    names.push(format!("ch{c}_{band}_{kind}"));
                }
            }
        }
        names
    }

    /// A single-line description of the layout, stored with trained models.
    pub fn signature(&self) -> String {
        self.names().join(",")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("feature vector"));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Computes feature vectors for windows under a fixed layout.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    levels: usize,
    subbands: SubbandMode,
    feature_set: FeatureSet,
    params: FeatureParams,
}

impl FeatureExtractor {
    pub fn new(levels: usize, subbands: SubbandMode, feature_set: FeatureSet, params: FeatureParams) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParams("levels must be positive".into()));
        }
        params.validate()?;
        Ok(Self {
            levels,
            subbands,
            feature_set,
            params,
        })
    }

    pub fn layout(&self, channels: usize) -> FeatureLayout {
        FeatureLayout::new(channels, self.levels, self.subbands, self.feature_set)
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn extract(&self, window: &Window<'_>) -> Result<FeatureVector> {
        self.extract_channels(window.channels())
    }

    /// Extracts from raw per-channel slices of equal length.
    pub fn extract_channels<'a>(&self, channels: impl IntoIterator<Item = &'a [f64]>) -> Result<FeatureVector> {
        let kinds = self.feature_set.kinds();
        let mut values = Vec::new();
        for (c, samples) in channels.into_iter().enumerate() {
            let decomp = wavelet::decompose(samples, self.levels)?;
            let mut bands: Vec<(String, &[f64])> = decomp
                .details()
                .iter()
                .enumerate()
                .map(|(j, d)| (format!("D{}", j + 1), d.as_slice()))
                .collect();
            if self.subbands == SubbandMode::DetailsPlusApprox {
                bands.push((format!("A{}", self.levels), decomp.approximation()));
            }
            for (name, coeffs) in bands {
                for &kind in kinds {
                    let v = feature(kind, coeffs, &self.params).map_err(|e| Error::SubBand {
                        channel: c + 1,
                        band: name.clone(),
                        source: Box::new(e),
                    })?;
                    values.push(v);
                }
            }
        }
        FeatureVector::new(values)
    }

    pub fn extract_batch(&self, mode: ExecMode, windows: &[Window<'_>]) -> Result<Vec<FeatureVector>> {
        par::try_map(mode, windows, |w| self.extract(w))
    }
}

/// All 17 kinds on D1..DL plus AL for every channel of `window`.
pub fn extract_vector(window: &Window<'_>, levels: usize, params: &FeatureParams) -> Result<FeatureVector> {
    FeatureExtractor::new(levels, SubbandMode::DetailsPlusApprox, FeatureSet::All, *params)?.extract(window)
}

/// Writes labelled feature vectors as CSV with a `label` column followed by
/// one column per layout dimension.
pub fn write_feature_csv(writer: impl Write, layout: &FeatureLayout, rows: &[(FeatureVector, usize)]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend(layout.names());
    w.write_record(&header)?;
    for (fv, label) in rows {
        if fv.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: fv.len(),
            });
        }
        let mut row = vec![label.to_string()];
        row.extend(fv.as_slice().iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}

/// Reads a feature CSV produced by [`write_feature_csv`] for `layout`.
pub fn read_feature_csv(reader: impl Read, layout: &FeatureLayout) -> Result<Vec<(FeatureVector, usize)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    let expected = layout.names();
    if header != expected {
        return Err(Error::LayoutMismatch {
            expected: expected.join(","),
            actual: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse_err = |m: String| Error::MalformedRow { line, message: m };
        let label: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(format!("bad label `{}`", &rec[0])))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(format!("bad value `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push((FeatureVector::new(values)?, label));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{segment, EmgRecording, WindowSpec};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn p() -> FeatureParams {
        FeatureParams::default()
    }

    fn abs_t(t: f64) -> FeatureParams {
        FeatureParams {
            myop_threshold: Threshold::Absolute(t),
            wamp_threshold: Threshold::Absolute(t),
            ..p()
        }
    }

    #[test]
    fn worked_conventional_examples() {
        assert_eq!(conventional_feature(FeatureKind::Mav, &[3.0, -3.0, 3.0], &p()).unwrap(), 3.0);
        assert_eq!(conventional_feature(FeatureKind::Wl, &[1.0, 2.0, 4.0], &p()).unwrap(), 3.0);
        assert_eq!(conventional_feature(FeatureKind::Rms, &[0.0; 5], &p()).unwrap(), 0.0);
        assert_eq!(conventional_feature(FeatureKind::Wamp, &[2.5; 6], &abs_t(0.1)).unwrap(), 0.0);
        assert_eq!(
            conventional_feature(FeatureKind::Myop, &[0.5, 0.01, 0.8], &abs_t(0.1)).unwrap(),
            2.0 / 3.0
        );
    }

    #[test]
    fn novel_worked_examples() {
        assert_eq!(iasd(&[0.0, 1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(iasd(&[0.0, 1.0, 4.0, 9.0, 16.0]).unwrap(), 6.0);
        assert_eq!(iasd(&[0.0, 1.0, 0.0, 1.0]).unwrap(), 4.0);
        assert_eq!(iatd(&[0.0, 1.0, 4.0, 9.0, 16.0]).unwrap(), 0.0);
        assert_eq!(iatd(&[0.0, 1.0, 8.0, 27.0, 64.0]).unwrap(), 12.0);
        assert_eq!(iatd(&[0.0, 1.0, 0.0, 1.0]).unwrap(), 4.0);
        assert_eq!(ieav(&[0.0; 7]).unwrap(), 7.0);
        assert_abs_diff_eq!(ieav(&[1.0, -1.0]).unwrap(), 2.0 * E, epsilon = 1e-12);
        assert_abs_diff_eq!(ieav(&[2f64.ln()]).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(ialv(&[0.0; 4], &p()).unwrap(), 0.0);
        assert_abs_diff_eq!(ialv(&[E - 1.0], &p()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ialv(&[-5.0], &p()).unwrap(), 27.631021115928547, epsilon = 1e-9);
        assert_eq!(ie(&[0.0; 3]).unwrap(), 3.0);
        assert_abs_diff_eq!(ie(&[1.0, -1.0]).unwrap(), E + 1.0 / E, epsilon = 1e-12);
        let pos = [0.3, 1.2, 0.0, 2.5];
        assert_eq!(ie(&pos).unwrap(), ieav(&pos).unwrap());
    }

    #[test]
    fn length_and_finiteness_errors() {
        for kind in FeatureKind::ALL {
            let short = vec![0.5; kind.min_len() - 1];
            match feature(kind, &short, &p()) {
                Err(Error::TooShort { min, .. }) => assert_eq!(min, kind.min_len()),
                other => panic!("{kind}: {other:?}"),
            }
            let ok = vec![0.5; kind.min_len()];
            assert!(feature(kind, &ok, &p()).is_ok(), "{kind}");
            let bad = vec![f64::NAN; kind.min_len().max(1)];
            assert!(matches!(feature(kind, &bad, &p()), Err(Error::NonFiniteInput(_))));
        }
        assert_eq!(FeatureKind::Iasd.min_len(), 3);
        assert_eq!(FeatureKind::Iatd.min_len(), 4);
    }

    #[test]
    fn overflow_guard() {
        assert!(matches!(ieav(&[0.0, -700.0]), Err(Error::Overflow { .. })));
        assert!(ie(&[-800.0]).is_ok());
        assert!(matches!(ie(&[700.0]), Err(Error::Overflow { .. })));
        assert!(ieav(&[699.0]).unwrap().is_finite());
    }

    #[test]
    fn param_validation() {
        let mut params = p();
        params.ialv_offset = 0.0;
        assert!(params.validate().is_err());
        let mut params = p();
        params.myop_threshold = Threshold::Absolute(-1.0);
        assert!(params.validate().is_err());
        assert_eq!("std:0.2".parse::<Threshold>().unwrap(), Threshold::StdFraction(0.2));
        assert_eq!("abs:1.5".parse::<Threshold>().unwrap(), Threshold::Absolute(1.5));
        assert!("abs:-1".parse::<Threshold>().is_err());
        assert!("0.2".parse::<Threshold>().is_err());
    }

    fn window_rec(ch: Vec<Vec<f64>>) -> EmgRecording {
        EmgRecording::new(ch, 4000.0, 1, "s", 1).unwrap()
    }

    #[test]
    fn vector_length_and_layout() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.11).sin()).collect();
        let y: Vec<f64> = (0..400).map(|i| (i as f64 * 0.53).cos() * 0.4).collect();
        let rec = window_rec(vec![x.clone(), y.clone()]);
        let w = segment(&rec, WindowSpec::new(400, 200).unwrap()).unwrap();
        let fv = extract_vector(&w[0], 2, &p()).unwrap();
        assert_eq!(fv.len(), 102);

        let layout = FeatureLayout::new(2, 2, SubbandMode::DetailsPlusApprox, FeatureSet::All);
        let names = layout.names();
        assert_eq!(names.len(), 102);
        assert_eq!(names[0], "ch1_D1_IEMG");
        assert_eq!(names[17], "ch1_D2_IEMG");
        assert_eq!(names[34], "ch1_A2_IEMG");
        assert_eq!(names[51], "ch2_D1_IEMG");
        assert_eq!(names[101], "ch2_A2_IE");

        // D2 MAV of channel 1 matches a direct computation.
        let d = wavelet::decompose(&x, 2).unwrap();
        let mav = d.detail(2).iter().map(|v| v.abs()).sum::<f64>() / 100.0;
        assert_abs_diff_eq!(fv.as_slice()[17 + 1], mav, epsilon = 1e-12);

        let conv = FeatureLayout::new(2, 2, SubbandMode::DetailsPlusApprox, FeatureSet::Conventional);
        assert_eq!(conv.len(), 72);
        let details = FeatureLayout::new(2, 2, SubbandMode::DetailsOnly, FeatureSet::All);
        assert_eq!(details.len(), 68);
        let ex = FeatureExtractor::new(2, SubbandMode::DetailsOnly, FeatureSet::All, p()).unwrap();
        assert_eq!(ex.extract(&w[0]).unwrap().len(), 68);
    }

    #[test]
    fn zero_window_closed_forms() {
        let rec = window_rec(vec![vec![0.0; 400], vec![0.0; 400]]);
        let w = segment(&rec, WindowSpec::new(400, 200).unwrap()).unwrap();
        let fv = extract_vector(&w[0], 2, &p()).unwrap();
        let band_lens = [200.0, 100.0, 100.0];
        for c in 0..2 {
            for (b, &len) in band_lens.iter().enumerate() {
                let block = &fv.as_slice()[(c * 3 + b) * 17..(c * 3 + b + 1) * 17];
                assert!(block[..14].iter().all(|&v| v == 0.0), "{block:?}");
                assert_eq!(block[14], len);
                assert_eq!(block[15], 0.0);
                assert_eq!(block[16], len);
            }
        }
    }

    #[test]
    fn channel_permutation_permutes_blocks() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.2).sin()).collect();
        let y: Vec<f64> = (0..400).map(|i| ((i * i) % 17) as f64 * 0.05).collect();
        let spec = WindowSpec::new(400, 200).unwrap();
        let a = window_rec(vec![x.clone(), y.clone()]);
        let b = window_rec(vec![y, x]);
        let fa = extract_vector(&segment(&a, spec).unwrap()[0], 2, &p()).unwrap();
        let fb = extract_vector(&segment(&b, spec).unwrap()[0], 2, &p()).unwrap();
        assert_eq!(fa.as_slice()[..51], fb.as_slice()[51..]);
        assert_eq!(fa.as_slice()[51..], fb.as_slice()[..51]);
    }

    #[test]
    fn subband_error_names_band() {
        let ex = FeatureExtractor::new(2, SubbandMode::DetailsPlusApprox, FeatureSet::All, p()).unwrap();
        // 8 samples: D1 has 4, D2 and A2 have 2, too short for IASD/IATD/DVARV.
        let err = ex.extract_channels([&[0.1; 8][..]]).unwrap_err();
        match err {
            Error::SubBand { channel, band, .. } => {
                assert_eq!(channel, 1);
                assert_eq!(band, "D2");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn feature_csv_round_trip_and_layout_check() {
        let layout = FeatureLayout::new(1, 1, SubbandMode::DetailsPlusApprox, FeatureSet::Conventional);
        let rows = vec![
            (FeatureVector::new((0..24).map(|i| i as f64 / 7.0).collect()).unwrap(), 3),
            (FeatureVector::new(vec![0.1; 24]).unwrap(), 1),
        ];
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, &layout, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,ch1_D1_IEMG,ch1_D1_MAV,"));
        assert_eq!(read_feature_csv(buf.as_slice(), &layout).unwrap(), rows);

        let other = FeatureLayout::new(1, 1, SubbandMode::DetailsOnly, FeatureSet::Conventional);
        assert!(matches!(
            read_feature_csv(buf.as_slice(), &other),
            Err(Error::LayoutMismatch { .. })
        ));
    }
}
