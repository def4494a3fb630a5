use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("tile ({row}, {col}) does not belong to the slice plan")]
    UnknownTile { row: usize, col: usize },

    #[error("detector failed on tile ({row}, {col}): {message}")]
    Detector {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("ppm parse error at byte {offset}: {message}")]
    Ppm { offset: usize, message: String },

    #[error("tensor format error at byte {offset}: {message}")]
    Tensor { offset: usize, message: String },

    #[error("invalid {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error("{path}: {source}")]
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

    /// Short machine-readable category used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidBox(_) => "invalid_box",
            Error::InvalidConfig(_) => "invalid_config",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::DimMismatch(_) => "dim_mismatch",
            Error::UnknownTile { .. } => "unknown_tile",
            Error::Detector { .. } => "detector",
            Error::Ppm { .. } => "ppm",
            Error::Tensor { .. } => "tensor",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
