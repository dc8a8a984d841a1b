use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the descriptor and recognition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("instance {0} does not occur in the scene")]
    UnknownInstance(u32),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("slice is empty")]
    EmptySlice,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{got} slices do not fit a descriptor padded to {max}")]
    TooManySlices { got: usize, max: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("descriptor length {got} exceeds model input dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },

    #[error("occlusion fraction {requested} unreachable (at most {achievable:.3} achievable)")]
    UnreachableFraction { requested: f64, achievable: f64 },

    #[error("library format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
