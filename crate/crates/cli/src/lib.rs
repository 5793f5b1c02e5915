//! Configuration and subcommands behind the `dvlnav` binary.

pub mod commands;
pub mod config;
