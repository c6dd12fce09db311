//! Experiment driver: configuration files in, reports and field dumps out.

pub mod config;
pub mod expr;
pub mod io;
pub mod run;

pub use config::{Command, RunConfig};
pub use run::{exit, exit_code, run, run_file, RunOptions, RunSummary};
