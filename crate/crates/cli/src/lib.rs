//! File formats and the command-line front end for `gsnmf`.

pub mod args;
mod commands;
mod error;
pub mod io;
pub mod report;

pub use args::Cli;
pub use commands::run;
pub use error::CliError;
