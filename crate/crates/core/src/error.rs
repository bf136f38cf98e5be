use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{location}: {message}")]
    Parse {
        path: PathBuf,
        /// `line N` for text formats, `byte N` for binary payloads.
        location: String,
        message: String,
    },

    #[error("index {index:?} out of bounds for dims {dims:?}")]
    OutOfBounds { index: [i64; 3], dims: [usize; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate triangle")]
    DegenerateTriangle,

    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    GridTooLarge { cells: u128, cap: u128 },

    #[error("room {room}: {message}")]
    Room { room: u32, message: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("ground truth: {0}")]
    GroundTruth(String),

    #[error("scene spec field `{field}`: {message}")]
    Scene { field: String, message: String },

    #[error("evaluation: {0}")]
    Evaluation(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn scene(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scene {
            field: field.into(),
            message: message.into(),
        }
    }
}
