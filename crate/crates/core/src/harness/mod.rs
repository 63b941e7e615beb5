//! Experiment plumbing behind the `epo` binary: configuration files, runs,
//! cost-limit sweeps and verification suites.

mod config;
mod run;
mod verify;

pub use config::{parse_key_values, ExperimentConfig, CONFIG_KEYS, OUT_ENV};
pub use run::{csv_file_name, env_label, run_experiment, sweep_cost_limit, RunArtifacts};
pub use verify::{run_suite, write_suite_report, Suite, SuiteOutcome};
