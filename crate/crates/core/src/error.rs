use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no records in {0}")]
    NoRecords(String),

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("non-finite sample at line {line}, column `{column}`")]
    NonFiniteSample { line: u64, column: String },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid window spec: {0}")]
    InvalidWindowSpec(String),

    #[error("recording has {len} samples, shorter than one window of {window}")]
    RecordingTooShort { len: usize, window: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthetic(String),

    #[error("wavelet: {0}")]
    Wavelet(String),

    #[error("signal length {len} is not divisible by {required} (2^{levels})")]
    NotDivisible {
        len: usize,
        required: usize,
        levels: usize,
    },

    #[error("{kind} needs at least {min} samples, got {got}")]
    TooShort {
        kind: &'static str,
        min: usize,
        got: usize,
    },

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("{kind}: input value {value} reaches the exp overflow guard ({guard}); normalize the signal first")]
    Overflow {
        kind: &'static str,
        value: f64,
        guard: f64,
    },

    #[error("sub-band {band} of channel {channel}: {source}")]
    SubBand {
        channel: usize,
        band: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid feature params: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid training config: {0}")]
    InvalidTrainConfig(String),

    #[error("class {0} has no training examples")]
    MissingClass(usize),

    #[error("label {label} outside 1..={class_count}")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("non-finite loss at epoch {0}")]
    Diverged(usize),

    #[error("feature layout mismatch: model expects `{expected}`, data provides `{actual}`")]
    LayoutMismatch { expected: String, actual: String },

    #[error("fusion over an empty posterior list")]
    EmptyPosteriors,

    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),

    #[error("degenerate posteriors: every class has zero product probability")]
    DegeneratePosteriors,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
