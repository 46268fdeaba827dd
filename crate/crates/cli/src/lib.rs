//! Command-line front end for `ctsd`: TOML experiments, CSV artifacts and
//! SVG figures.

pub mod checks;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod presets;

pub use error::CliError;
