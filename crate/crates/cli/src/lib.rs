//! Library side of the `gle-kit` command-line tool.

pub mod config;
pub mod csvio;
pub mod pipeline;

pub use config::{validate_config, ConfigErrors, RunConfig};
pub use pipeline::{design, execute, Command, Report, StageError};
