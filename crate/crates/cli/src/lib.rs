//! Scenario configuration, presets and batch output for the correlation engine.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;
