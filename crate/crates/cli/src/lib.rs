//! Experiment harness for noise-adaptive SGD: configuration, single runs,
//! parallel sweeps, CSV output and the verification suites.

pub mod config;
pub mod experiment;
pub mod output;
pub mod suites;
pub mod sweep;
