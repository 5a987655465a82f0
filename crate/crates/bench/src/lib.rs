//! Experiment harness behind the `pgbench` binary: dataset loading, ground
//! truth, timed builds, recall/QPS sweeps and Monte-Carlo checks of the
//! pruning and sampling analysis. Every command returns a serializable report.

pub mod commands;
pub mod config;
pub mod montecarlo;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] proxgraph::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// 2 for bad invocations, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Usage(_)
            | BenchError::Core(proxgraph::Error::InvalidArgument(_))
            | BenchError::Core(proxgraph::Error::DimensionMismatch { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

pub use commands::{
    cmd_alpha_grid, cmd_build, cmd_gen_gt, cmd_search_sweep, load_source, normalize_ls,
};
pub use config::{BuildConfig, Builder, DataSource, DistKind};
