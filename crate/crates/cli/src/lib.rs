//! Experiment driver for the `clipbias` library. Each subcommand resolves an
//! effective configuration, writes its data files plus `metadata.json` and a
//! checksummed `manifest.json`, and reports a list of embedded checks.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Check, CommandName, Outcome};
pub use config::Settings;

pub type CliResult<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;
