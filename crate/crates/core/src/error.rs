use thiserror::Error;

/// Errors produced by the synchronization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("waveform too short: {len} samples, need at least {min}")]
    WaveformTooShort { len: usize, min: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("need at least two frames to interpolate")]
    TooFewFrames,

    #[error("sequence shorter than kernel support: {len} frames, radius {radius}")]
    SequenceTooShort { len: usize, radius: usize },

    #[error("no valid frames to average over")]
    NoValidFrames,

    #[error("R² undefined: reference offsets have zero variance")]
    R2Undefined,

    #[error("insufficient overlap: {frames} frames at shift {shift_ms} ms, need {required}")]
    InsufficientOverlap {
        shift_ms: i64,
        frames: usize,
        required: usize,
    },

    #[error("offset {ms} ms is not a whole number of {frame_ms} ms frames")]
    FractionalFrameShift { ms: i64, frame_ms: i64 },

    #[error("loss is not a scalar: shape {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("graph cycle detected at node {node}")]
    GraphCycle { node: usize },

    #[error("training diverged at step {step}: loss is {value}")]
    Diverged { step: usize, value: f64 },

    #[error("unsupported WAV file: {field} is {found}, expected {expected}")]
    UnsupportedWav {
        field: &'static str,
        found: String,
        expected: String,
    },

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
