use std::path::PathBuf;

use crate::codec::CellIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cell ({i}, {j}) is outside the {n_y}x{n_z} grid")]
    CellOutOfRange {
        i: usize,
        j: usize,
        n_y: usize,
        n_z: usize,
    },

    #[error("degenerate roll encoding at {0}: (cos, sin) pair has zero length")]
    DegenerateRoll(CellIndex),

    #[error("positive set is empty, loss normalization is undefined")]
    EmptyPositives,

    #[error("ground-truth set is empty, average precision is undefined")]
    EmptyGroundTruth,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 for broken internal
    /// invariants, 1 for everything caused by the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}
