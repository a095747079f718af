use thiserror::Error;

/// Unified error type for the whole pipeline.
///
/// Every fallible public entry point returns `Result<T, Error>`; panics are
/// reserved for internal logic bugs (index arithmetic gone wrong), never for
/// bad user input.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested op.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A computation produced NaN or Inf where finite values are required.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// `backward` was called on a tensor that is not rank-0.
    #[error("backward requires a scalar loss, got rank-{rank} tensor with {numel} elements")]
    NotScalar { rank: usize, numel: usize },

    /// An optimizer step found a parameter whose gradient was never populated.
    #[error("missing gradient for parameter {index} (shape {dims:?})")]
    MissingGrad { index: usize, dims: Vec<usize> },

    /// Unrecognized gesture kind string.
    #[error("unknown gesture kind: {0:?}")]
    UnknownKind(String),

    /// Capture geometry is unphysical (non-positive sizes, gesture sweeping
    /// through the radar, start fraction outside [0, 1), ...).
    #[error("bad geometry: {0}")]
    BadGeometry(String),

    /// The requested gesture kinematics alias above the sampling rate.
    #[error("Nyquist violation: max Doppler {max_doppler_hz:.1} Hz exceeds fs/2 = {half_fs_hz:.1} Hz")]
    NyquistViolation {
        max_doppler_hz: f64,
        half_fs_hz: f64,
    },

    /// STFT window longer than the signal.
    #[error("window of {window} samples is longer than the {signal} sample signal")]
    WindowTooLong { window: usize, signal: usize },

    /// Bad time-frequency parameter (CWT scale grid, window or hop size).
    #[error("bad time-frequency parameter: {0}")]
    BadScale(String),

    /// p-norm pooling with p < 1 is not a norm.
    #[error("bad norm order p = {0}; require p >= 1")]
    BadNorm(f64),

    /// Batch statistics are undefined (batch of < 2 in training mode).
    #[error("degenerate batch of {0} samples for batch norm in training mode")]
    DegenerateBatch(usize),

    /// Offset tensor shape does not match the deformable kernel geometry.
    #[error("offset shape mismatch: expected {expected:?}, got {got:?}")]
    OffsetShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// Rejected training/CLI configuration.
    #[error("bad config: {0}")]
    BadConfig(String),

    /// Training loss became NaN/Inf.
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    /// Dataset contains no samples (or a class is empty).
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Checkpoint on disk does not match the requested architecture.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    /// gradcheck was asked about a layer it does not know.
    #[error("unknown layer {requested:?}; registered layers: {known}")]
    UnknownLayer { requested: String, known: String },

    /// Malformed container file (bad magic, version, dtype code, or truncated payload).
    #[error("bad container: {0}")]
    BadContainer(String),

    /// Malformed dataset directory or manifest.
    #[error("bad dataset: {0}")]
    BadDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
