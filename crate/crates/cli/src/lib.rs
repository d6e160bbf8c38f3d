//! Everything behind the `nhmm` binary: configuration loading, checkpoint
//! persistence, the CSV tables the commands exchange, and one module per
//! subcommand. The binary itself only parses arguments and dispatches here.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod tables;
