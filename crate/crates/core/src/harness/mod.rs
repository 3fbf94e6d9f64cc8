//! Experiment plumbing: IO, configuration, tuning and benchmarking.

pub mod config;
pub mod estimate;
pub mod eval;
pub mod experiment;
pub mod io;
