use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("object {object_id} (pose {pose_index}) is clipped by the canvas edge")]
    Clipped { object_id: u32, pose_index: u32 },

    #[error("center of mass undefined: image contains only background pixels")]
    UndefinedCenterOfMass,

    #[error("replicator dynamics undefined: payoff x·A·x is zero")]
    ZeroPayoff,

    #[error("index undefined: {0}")]
    UndefinedIndex(String),

    #[error("class {class} has {size} members, fewer than the {folds} folds requested")]
    ClassTooSmall { class: usize, size: usize, folds: usize },

    #[error("stimulus '{stimulus}' has zero repetitions")]
    ZeroRepetitions { stimulus: String },

    #[error("perplexity {perplexity} too large for {n} points (must be < (n-1)/3)")]
    PerplexityTooLarge { perplexity: f64, n: usize },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
