//! Experiment harness for `branco-core`: configuration files, deterministic
//! parallel ensembles, the experiment suite and its reports, and the
//! `branco-lab` command line.

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, InitSpec, LatticeSpec, PhiEntry};
pub use experiments::{Experiment, ExperimentError};
pub use report::{Entry, Report, Verdict};
