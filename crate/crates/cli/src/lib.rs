//! Command-line front end for parklot: pipeline runs, log analysis, slot-map
//! validation, scenario generation and the live event server.

pub mod commands;
pub mod config;
pub mod serve;

pub use commands::CliError;
pub use config::EngineConfig;
