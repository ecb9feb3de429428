use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("backward called without a preceding train-mode forward")]
    NoForwardCache,

    #[error("optimizer step requested before gradients were computed")]
    StaleGradients,

    #[error("label {label} of sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: u64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("empty clip '{0}'")]
    EmptyClip(String),

    #[error("checkpoint: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("checkpoint: unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint: truncated payload while reading {0}")]
    Truncated(&'static str),

    #[error("checkpoint: buffer '{name}' has shape {found:?}, expected {expected:?}")]
    ShapeDisagreement {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },

    #[error("checkpoint: malformed content: {0}")]
    Malformed(String),

    #[error("image format: {0}")]
    ImageFormat(String),

    #[error("landmarks: {0}")]
    Landmarks(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
