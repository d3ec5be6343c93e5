//! Command-line front end for the ACC benchmark: JSON run configs, single
//! runs, sweeps, CSV trajectories, summaries and SVG plots.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{load, Override, RunConfig};
pub use error::CliError;
pub use run::{execute_run, simulate, sweep, RunOutcome, SweepOutcome};
