//! Experiment harness for the collaborative predictive blacklisting
//! toolkit: configuration parsing, the sweep runner, and protocol
//! benchmarks. The `cpb` binary is a thin wrapper over these modules.

pub mod bench;
pub mod config;
pub mod runner;
