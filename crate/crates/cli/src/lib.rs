//! Command-line front end: corpus generation, training, sweeps, analyses
//! and sampling, with PGM/CSV/SVG artifacts and a `run.cfg` per run.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pgm;
pub mod plot;

pub use config::RunConfig;
pub use error::CliError;
