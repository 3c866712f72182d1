//! Configuration, commands and artifact writers behind the `fockfb` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use config::ExperimentConfig;
