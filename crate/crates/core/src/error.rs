use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("replicate count m must be >= 2 (got {0}); within-group variance is unidentifiable from one replicate")]
    TooFewReplicates(usize),
    #[error("group count n must be >= 1 (got {0})")]
    NoGroups(usize),
    #[error("sigma2 must be finite and > 0 (got {0})")]
    NonPositiveVariance(f64),
    #[error("explicit mean sequence has length {got}, expected n = {expected}")]
    MeanLengthMismatch { expected: usize, got: usize },
    #[error("random-walk step_sd must be finite and > 0 (got {0})")]
    InvalidStepSd(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("operation requires m == 2 (got m = {0}); use the Helmert transform")]
    RequiresTwoReplicates(usize),
    #[error("empty contrast series")]
    EmptySeries,
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("invalid optimizer config: {0}")]
    OptimizerConfig(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid user input rather than the environment.
    pub fn is_usage(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Parse { .. } | Error::Csv(_) | Error::ThreadPool(_)
        )
    }
}
