//! Command-line front end for `asynctrig`: JSON configuration, the four
//! reference presets, CSV/JSON output and SVG plots.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod presets;

pub use cli::{execute, run_cli, run_with, Run};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use presets::Preset;
