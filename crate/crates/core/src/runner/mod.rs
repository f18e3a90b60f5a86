//! Experiment orchestration: configs, the optimisation loops, CSV and SVG
//! output, and a brute-force optimum for tiny instances.

pub mod config;
pub mod experiment;
pub mod oracle;
pub mod plot;
pub mod record;

use std::path::Path;

use thiserror::Error;

use crate::acquisition::AcqError;
use crate::baselines::BaselineError;
use crate::data::DataError;
use crate::envs::EnvError;
use crate::gp::GpError;
use crate::meanfield::MeanFieldError;

pub use config::{Algorithm, ExperimentConfig, ResolvedExperiment};
pub use experiment::{aggregate_best, run_algorithm, run_experiment, run_mf_gp_ucb, Aggregate, ExperimentSummary};
pub use oracle::{brute_force_optimum, regret_curve};
pub use record::{BestSolution, RunOutput, RunRecord};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Acquisition(#[from] AcqError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("run aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: usize,
        source: Box<RunnerError>,
        /// Records logged before the failure.
        partial: Vec<RunRecord>,
    },
    #[error("oracle: {0}")]
    Oracle(String),
}

impl RunnerError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv { path: path.display().to_string(), source }
    }

    /// Process exit code: 1 config, 2 runtime, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Io { .. } | Self::Csv { .. } | Self::Data(DataError::Io { .. }) => 3,
            Self::Aborted { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
