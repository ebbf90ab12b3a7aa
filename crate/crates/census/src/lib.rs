//! Experiments, configuration, caching and reports for the `zero-census` command.

pub mod cache;
pub mod config;
pub mod report;
pub mod run;
