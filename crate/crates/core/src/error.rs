use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid network case: {0}")]
    Validation(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("system generation failed: {0}")]
    Generation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state estimation failed: {message} (deficient columns: {columns:?})")]
    Estimation { message: String, columns: Vec<usize> },

    #[error("power flow failed: {0}")]
    PowerFlow(String),

    #[error("dispatch infeasible: {0}")]
    Dispatch(String),

    #[error("invalid attack: {0}")]
    Attack(String),

    #[error("bus {bus} is unmonitorable: every row of its basis is masked or zero")]
    Unmonitorable { bus: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("localization failed: {0}")]
    Localization(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
