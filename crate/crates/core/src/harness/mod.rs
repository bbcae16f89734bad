//! Experiment configuration, the multirate closed-loop simulation, run logs,
//! metrics and Monte Carlo batches.

pub mod config;
pub mod log;
pub mod metrics;
pub mod montecarlo;
pub mod sim;

pub use config::{apply_override, ExperimentConfig, Scenario};
pub use log::{LogRow, RunLog};
pub use metrics::{compute_rmse, convergence_band, convergence_time, summarize_run, Metrics, RunSummary};
pub use montecarlo::{monte_carlo, McRun, MonteCarloResult, MonteCarloSpec};
pub use sim::{build_controller, run_closed_loop, MAX_CONSECUTIVE_FAILURES};
