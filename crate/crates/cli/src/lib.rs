//! Library surface of the driftlab command-line tool: experiment
//! configuration, the four subcommand implementations, and the verification
//! suites. The binary in `main.rs` is a thin argument-parsing shell.

pub mod commands;
pub mod config;
pub mod io;
pub mod verify;
