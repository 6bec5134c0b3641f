//! Experiment orchestration: configs, seeded benchmarks, regret reports and
//! artifact export.

pub mod archive;
pub mod artifacts;
pub mod bench;
pub mod components;
pub mod config;
pub mod report;
pub mod training;

use std::path::{Path, PathBuf};

use cpmes_cleanup::TrainError;
use cpmes_core::synthetic::SyntheticError;
use thiserror::Error;

pub use bench::{run_benchmark, run_cell, Benchmark, CellId, Reference, RunOutcome};
pub use components::{regret_components, RegretComponents};
pub use config::ExperimentConfig;
pub use report::RegretReport;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
