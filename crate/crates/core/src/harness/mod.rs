//! End-to-end experiment pipeline and command-line front end.

mod cli;
mod config;
mod experiment;
mod output;
mod stability;

pub use cli::run_cli;
pub use config::{Budget, ConstraintConfig, ExperimentConfig, ModelConfig};
pub use experiment::{prepare, run_experiment, BudgetRun, Prepared, RunResult};
pub use output::{
    reproduce_figure, write_budget_files, write_estimate_csv, write_trace_csv, CostTraces, RunSummary,
};
pub use stability::{
    detectability_samples, observer_sample, run_stability_study, write_stability_study, CheckSummary,
    StabilityReport, StabilityStudy,
};
