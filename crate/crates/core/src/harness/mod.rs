//! Experiment orchestration: JSON configs, the global learning-rate
//! schedule, per-seed run loops with CSV metrics, sweeps and comparisons.

mod config;
mod run;
mod schedule;
mod sweep;

pub use config::{
    ExperimentConfig, GaussianClipSpec, NormClipSpec, NullifySpec, OptimizerSpec, PlainSpec,
    ScheduleSpec, SpikeSpec, TraceSpec, ValueClipSpec, CONFIG_VERSION,
};
pub use run::{
    read_metrics, run, run_seed, run_seed_traced, run_with_problem, MetricsRecord, RunSummary,
    SeedOutcome, METRICS_HEADER,
};
pub use schedule::global_lr;
pub use sweep::{
    compare, median, parse_values, quantile, sweep, with_param, write_compare_csv, CompareResult,
    CompareRow, SweepResult, SweepRow,
};

use thiserror::Error;

use crate::optim::OptimError;
use crate::params::ParamError;
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown sweep parameter {0:?}")]
    UnknownParameter(String),
    #[error("configs are not comparable: {0}")]
    IncomparableConfigs(String),
    #[error("non-finite {what} at step {step} (seed {seed})")]
    NonFinite { seed: u64, step: u64, what: String },
    #[error("malformed metrics file: {0}")]
    Format(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    SpikeLab(#[from] crate::spike_lab::SpikeLabError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// True for problems with the user's configuration, as opposed to
    /// failures while running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::InvalidConfig(_)
                | HarnessError::Parse(_)
                | HarnessError::UnknownParameter(_)
                | HarnessError::IncomparableConfigs(_)
                | HarnessError::Problem(_)
        ) || matches!(self, HarnessError::Optim(OptimError::InvalidConfig(_)))
    }
}
