use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rod width {width} outside feasible range [{min}, {max}] for class {class}")]
    WidthOutOfRange {
        class: char,
        width: f64,
        min: f64,
        max: f64,
    },

    #[error("volume fraction {target} not achievable for class {class} (range [{min}, {max}])")]
    UnachievableFraction {
        class: char,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("unknown class label `{0}`")]
    UnknownClass(String),

    #[error("degenerate unit cell: {0}")]
    DegenerateCell(String),

    #[error("correlation matrix not positive definite even with nugget {nugget:e}")]
    NotPositiveDefinite { nugget: f64 },

    #[error("all {restarts} likelihood restarts failed; last error: {last}")]
    TrainingFailed { restarts: usize, last: String },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("MMA subproblem infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
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

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
