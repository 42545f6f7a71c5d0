//! Named experiments, their JSON configs and their output artifacts.

pub mod config;
pub mod init;
pub mod output;
pub mod runner;
pub mod sweep;

pub use config::{InitKind, ScenarioConfig, ScenarioKind, TopologySpec};
pub use output::{Assertion, Comparison, Observation, Verdict};
pub use runner::{execute, run_scenario, run_scenario_in, ExitStatus, ScenarioReport, ScenarioRun};
pub use sweep::{expand, run_sweep, SweepVerdict};
