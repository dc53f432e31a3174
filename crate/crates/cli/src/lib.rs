//! Command-line harness: argument parsing, run records, experiment runners and
//! electrodogram plots.

pub mod cli;
pub mod commands;
pub mod config;
pub mod experiments;
pub mod plot;
pub mod run;
