//! Experiment runner for random alternating shear flows.

pub mod config;
pub mod error;
pub mod run;
