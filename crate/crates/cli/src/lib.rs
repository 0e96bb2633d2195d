//! Command-line front end: configuration, batch orchestration and the
//! optional external completion client.

pub mod commands;
pub mod config;
pub mod llm;
