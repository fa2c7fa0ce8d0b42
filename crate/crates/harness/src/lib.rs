//! Experiment harness for the `omd-curl` learners: configuration, tasks,
//! comparators, regret and CSV/JSON artifacts.

pub mod comparator;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;
pub mod regret;
pub mod tasks;

pub use config::ExperimentConfig;
pub use error::HarnessError;
pub use experiment::{run_experiment, ExperimentOutcome};
