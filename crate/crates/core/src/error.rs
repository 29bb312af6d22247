use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every axis must be at least 1")]
    InvalidDims((usize, usize, usize)),
    #[error("invalid spacing {0:?}: every component must be finite and positive")]
    InvalidSpacing((f64, f64, f64)),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
    #[error("data length {len} does not match dims {dims:?}")]
    DataLength {
        len: usize,
        dims: (usize, usize, usize),
    },
    #[error("value {value} at voxel {index} is outside [0, 1]")]
    OutOfUnitRange { index: usize, value: f64 },
    #[error("value {value} at voxel {index} is not a binary mask value")]
    NotBinary { index: usize, value: f64 },
    #[error("invalid loss weights: lambda1={lambda1}, lambda2={lambda2}")]
    InvalidWeights { lambda1: f64, lambda2: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("mask must contain both foreground and background voxels")]
    SingleClassMask,
    #[error("zero variance input")]
    ZeroVariance,
    #[error("phantom spec violates constraints: {0}")]
    InvalidPhantom(String),
    #[error("could not draw a valid phantom after {0} attempts")]
    JitterExhausted(usize),
    #[error("backward cache does not match the network: {0}")]
    StaleCache(String),
    #[error("shape mismatch: expected {expected} values, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("non-finite training loss at step {step} (mode {mode}): {value}")]
    NonFiniteLoss { step: usize, mode: String, value: f64 },
    #[error("bad magic in volume file")]
    BadMagic,
    #[error("truncated volume file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("volume file has {0} trailing bytes after the payload")]
    TrailingBytes(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
