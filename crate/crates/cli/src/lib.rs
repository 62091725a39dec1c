//! Experiment harness behind the `wfw` binary: JSON configs, experiment
//! runners and SVG charts of their traces.

pub mod config;
pub mod experiments;
pub mod plot;
