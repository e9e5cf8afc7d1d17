use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode raster {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch { expected: (usize, usize), actual: (usize, usize) },

    #[error("non-binary mask value {value} at pixel ({row}, {col})")]
    NonBinaryMask { value: u8, row: usize, col: usize },

    #[error("label {recorded} inconsistent with mask content ({derived})")]
    LabelMismatch { recorded: String, derived: String },

    #[error("value {value} out of range {range} in {what}")]
    OutOfRange { what: &'static str, value: f64, range: &'static str },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch { what: &'static str, expected: usize, actual: usize },

    #[error("unsupported input resolution {height}x{width}: {reason}")]
    Resolution { height: usize, width: usize, reason: String },

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownStrategy { kind: &'static str, name: String, known: String },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training stage '{stage}' requires a checkpoint that completed '{missing}'")]
    MissingPrerequisite { stage: String, missing: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
