use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum FppError {
    #[error("non-finite input: {0}")]
    NonFinite(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed raster header: {0}")]
    MalformedHeader(String),

    #[error("truncated raster payload: expected {expected} bytes, got {got}")]
    TruncatedPayload { expected: usize, got: usize },

    #[error("raster dimensions overflow or are zero: {width}x{height}")]
    DimensionOverflow { width: u64, height: u64 },

    #[error("value {0} out of range [{1}, {2}]")]
    OutOfRange(f64, f64, f64),

    #[error("point behind device (depth {0} <= 0)")]
    BehindDevice(f64),

    #[error("degenerate rig: {0}")]
    DegenerateRig(String),

    #[error("empty mask: no valid pixels")]
    EmptyMask,

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("missing file: {0}")]
    MissingFile(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("png error: {0}")]
    Png(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FppError>;
