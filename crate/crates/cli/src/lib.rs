//! Batch front end for `chgrow-core`: config parsing, run orchestration,
//! persistence and plot emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;

pub use commands::{cmd_check_estimates, cmd_mms, cmd_plot, cmd_run, cmd_sweep, cmd_validate_coeff, RunOutcome};
pub use config::{parse_config, InitialCondition, Overrides, RunConfig, StudyConfig, SweepConfig, SweepParameter};
pub use error::CliError;
pub use io::Manifest;
