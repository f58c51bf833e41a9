//! Experiment harness for the covert-attack detector: scenarios, Monte-Carlo
//! replications, run-length and localization metrics, report files.

pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;
mod svg;

use std::path::Path;

pub use metrics::{arl_stats, compute_confusion, ArlStats, ClassMetrics, Confusion};
pub use report::emit_report;
pub use runner::{Harness, LevelMetrics, ReplicationRecord, RunMetrics, RunOutput, SeriesLog, TickLog};
pub use scenario::{Scenario, Testbed};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] grid_sentinel_core::Error),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("{level}: {failed} of {total} replications failed (limit 5%)")]
    TooManyFailures { level: f64, failed: usize, total: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// CLI exit code: 1 for configuration problems, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            _ => 2,
        }
    }
}
