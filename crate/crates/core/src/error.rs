use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by `cor-core`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite real")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("label column {0} not found")]
    UnknownColumn(String),

    #[error("need at least {needed} distinct classes, found {found}")]
    TooFewClasses { needed: usize, found: usize },

    #[error("cannot place {k} centers {separation} apart in {dims} dimensions")]
    InfeasibleGeometry {
        k: usize,
        dims: usize,
        separation: f64,
    },

    #[error("requested {requested} clusters plus {outliers} outliers but only {points} points")]
    TooManyClusters {
        requested: usize,
        outliers: usize,
        points: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("generalized KL needs entries in [0, 1]; row {row}, column {column} is {value}")]
    OutOfUnitRange { row: usize, column: usize, value: f64 },

    #[error("encodings do not come from the same basic partitions or have the wrong orientation")]
    ProvenanceMismatch,

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
