//! Library behind the `lfm` command-line tool: JSON experiment configs, CSV
//! data files and the `simulate`, `smooth`, `segment` and `fit` commands.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod optimize;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
