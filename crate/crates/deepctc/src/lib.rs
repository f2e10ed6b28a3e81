//! File formats, experiment presets, parallel BLER sweeps and the command
//! line front end for [`deepctc_core`].

pub mod cli;
pub mod config;
pub mod csv;
mod error;
pub mod model_file;
pub mod presets;
pub mod runner;

pub use error::CliError;
