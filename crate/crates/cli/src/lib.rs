//! Command-line surface of the simulator: config parsing, output files and
//! the `run | study | verify | presets` subcommands.

pub mod app;
pub mod io;

pub use app::main_with_args;
pub use io::{parse_config, ConfigError};
