//! Experiment drivers behind the `flexstep` binary.

pub mod campaign;
pub mod config;
pub mod sweep;
