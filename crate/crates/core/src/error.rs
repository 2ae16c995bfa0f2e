use std::path::PathBuf;

/// Every failure the pipeline can report.
///
/// The `Display` text of the domain variants starts with a stable kebab-case
/// tag (`segment-too-short`, `no-sync-event`, ...) so that callers and the CLI
/// can match on it.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("segment-too-short: {len} samples, need at least {needed}")]
    SegmentTooShort { len: usize, needed: usize },

    #[error("empty-input: {0}")]
    Empty(&'static str),

    #[error("invalid-parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension-mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no-sync-event")]
    NoSyncEvent,

    #[error("tick-out-of-range: tick at {tick:.3} s outside [0, {duration:.3}) s")]
    TickOutOfRange { tick: f64, duration: f64 },

    #[error("no-voice-activity")]
    NoVoiceActivity,

    #[error("undersampled-chirp: rate {rate} Hz below 2 x {f1} Hz")]
    UndersampledChirp { rate: f64, f1: f64 },

    #[error("rate-mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: f64, actual: f64 },

    #[error("missing-channel: {0}")]
    MissingChannel(String),

    #[error("combo-selector-invalid: {combo} with {selector}")]
    ComboSelectorInvalid { combo: String, selector: String },

    #[error("mode-mismatch: {0}")]
    ModeMismatch(String),

    #[error("training-diverged at epoch {0}")]
    TrainingDiverged(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            message: message.into(),
        }
    }
}
