//! Config-driven runner for the motc checks: TOML experiments in, JSON and
//! CSV reports out.

pub mod config;
pub mod presets;
pub mod render;
pub mod run;
