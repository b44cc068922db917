//! Experiment runner, report formats and configuration parsing.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{apply_config, parse_config, parse_schedule};
pub use experiment::{run_experiment, verify_solution, Dumps, ExperimentSpec, ProblemSetup, SolutionCheck};
pub use report::{from_csv, to_csv, to_markdown, Outcome, ReportRow};
