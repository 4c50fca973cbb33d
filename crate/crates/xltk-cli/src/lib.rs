//! Library half of the `xltk` binary: configuration schema, error/exit-code
//! mapping, the shared data→vocab→model assembly line, and one module per
//! subcommand. Kept as a library so integration tests can reach the schema.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{Config, Settings, CONFIG_KEYS};
pub use error::CliError;
