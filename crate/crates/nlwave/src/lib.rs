//! Files, presets and the command line around [`nlwave_core`].

pub mod cli;
pub mod config;
mod error;
pub mod io;
pub mod presets;

pub use error::CliError;
