//! Scenario configuration, experiment execution, and reporting for the flt
//! federated-learning simulator.

pub mod config;
pub mod report;
pub mod runner;

pub use config::ScenarioConfig;
pub use report::compare_report;
pub use runner::{metrics_to_csv, run_experiment, ExperimentSummary};
