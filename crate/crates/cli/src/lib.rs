//! Command-line front end and experiment pipeline.

pub mod cli;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
