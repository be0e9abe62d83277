//! The experiment suite. Each experiment turns an [`ExperimentConfig`] into
//! a [`Report`] whose entries carry an estimate, its standard error, the
//! reference value, a bias budget and a verdict.

mod bounds;
mod duality;
mod invariant;
mod moments;
mod poissonization;
mod thinning;

pub use bounds::{explicit_entries, kmom_entries, run_bounds_suite, subduality_entries};
pub use duality::run_duality_experiment;
pub use invariant::run_invariant_convergence_experiment;
pub use moments::{run_moment_dual_check, MomentCase};
pub use poissonization::run_poissonization_experiment;
pub use thinning::run_thinning_experiment;

use branco_core::{FrequencyState, ParamBridge, RateParams};

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::Report;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] branco_core::Error),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Stream tags; every ensemble in the suite uses its own.
mod tags {
    pub const DUALITY_PRIMAL: u64 = 1;
    pub const DUALITY_DUAL: u64 = 2;
    pub const THINNING_PARTNER: u64 = 3;
    pub const THINNING_DIRECT: u64 = 4;
    pub const POISSON_PRIMAL: u64 = 5;
    pub const POISSON_DUAL: u64 = 6;
    pub const INVARIANT_PRIMAL: u64 = 7;
    pub const INVARIANT_DUAL: u64 = 8;
    pub const KMOM: u64 = 9;
    pub const EXPLICIT: u64 = 10;
    pub const SUBDUALITY: u64 = 11;
    pub const MOMENT_DUAL: u64 = 12;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Duality,
    Thinning,
    Poissonization,
    Invariant,
    Bounds,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::Duality,
        Experiment::Thinning,
        Experiment::Poissonization,
        Experiment::Invariant,
        Experiment::Bounds,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Duality => "duality",
            Experiment::Thinning => "thinning",
            Experiment::Poissonization => "poissonization",
            Experiment::Invariant => "invariant",
            Experiment::Bounds => "bounds",
        }
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        match self {
            Experiment::Duality => run_duality_experiment(cfg),
            Experiment::Thinning => run_thinning_experiment(cfg),
            Experiment::Poissonization => run_poissonization_experiment(cfg),
            Experiment::Invariant => run_invariant_convergence_experiment(cfg),
            Experiment::Bounds => run_bounds_suite(cfg),
        }
    }
}

fn bridge(p: &RateParams) -> Result<ParamBridge> {
    if p.pair_rate() <= 0.0 {
        return Err(ExperimentError::Precondition("a + c > 0"));
    }
    Ok(ParamBridge::from_branco(p)?)
}

fn phi_fields(cfg: &ExperimentConfig, sites: usize) -> Result<Vec<FrequencyState>> {
    Ok(cfg
        .phi_panel
        .iter()
        .map(|p| p.frequency(sites))
        .collect::<std::result::Result<_, _>>()?)
}

fn panel_key(t: f64, phi: &str) -> String {
    format!("t={t};phi={phi}")
}
