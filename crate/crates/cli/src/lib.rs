//! Configuration files, run orchestration and file output for `thermoctl`.
//!
//! Output directory layout of a run:
//!
//! * `series.csv`: `t,e_y,e_grad,mass,kappa_1..kappa_J`, one row per time node
//! * `snap_<step>.pgm`: binary graymaps, one pixel per mesh vertex
//! * `config_echo.toml`: the fully resolved configuration
//! * `report.csv`: verification tables (`verify` only)

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use error::{CliError, Result};
