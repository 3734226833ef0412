use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("scale {scale} is invalid for length {length} and detrend order {order}: {reason}")]
    InvalidScale {
        scale: usize,
        length: usize,
        order: usize,
        reason: &'static str,
    },

    #[error("every segment covariance at scale {scale} is zero (first offending segment {segment}); q <= 0 moments are undefined")]
    DegenerateSegment { scale: usize, segment: usize },

    #[error("fit needs at least 3 usable scales, found {0}")]
    TooFewScales(usize),

    #[error("q-grid mismatch between fits")]
    GridMismatch,

    #[error("moment q = {0} is not present in the fit")]
    MissingMoment(f64),

    #[error("malformed panel file {path}: line {line}: {reason}")]
    MalformedCsv { path: PathBuf, line: u64, reason: String },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
