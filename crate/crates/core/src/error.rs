use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("utterance too short: {samples} samples < window of {window}")]
    UtteranceTooShort { samples: usize, window: usize },

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("frame alignment: cannot align {from} frames to {to}; run align_frames on inputs with a 1x or 2x frame ratio")]
    Alignment { from: usize, to: usize },

    #[error("unsupported wav: {0}")]
    WavFormat(String),

    #[error("malformed RIFF at byte {offset}: {reason}")]
    WavParse { offset: usize, reason: String },

    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("truncated checkpoint: {0}")]
    TruncatedCheckpoint(String),

    #[error("checkpoint shape mismatch for parameter `{name}`: file has {found:?}, config expects {expected:?}")]
    CheckpointShape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed feature dump: {0}")]
    FeatureDump(String),

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("empty split `{0}`")]
    EmptySplit(String),

    #[error("intent count mismatch: {left} vs {right}")]
    IntentMismatch { left: usize, right: usize },

    #[error("architecture {0} has no attention pooling layer")]
    NoAttention(String),

    #[error("missing metrics for run {}", .0.display())]
    MissingMetrics(PathBuf),

    #[error("training invariant violated: {0}")]
    Invariant(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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
