use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lattice must contain at least one site")]
    EmptyLattice,
    #[error("negative jump rate {rate} on edge ({from}, {to})")]
    NegativeRate { from: usize, to: usize, rate: f64 },
    #[error("self-loop with rate {rate} at site {site}; q(i,i) must be zero")]
    SelfLoop { site: usize, rate: f64 },
    #[error("edge ({from}, {to}) references a site outside 0..{sites}")]
    SiteOutOfRange { from: usize, to: usize, sites: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("time grid must be nondecreasing and start at or after 0")]
    BadTimeGrid,
    #[error("state length {got} does not match lattice size {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {value} at site {site} outside [0, 1]")]
    OutOfUnitInterval { site: usize, value: f64 },
    #[error("negative intensity {value} at site {site}")]
    NegativeIntensity { site: usize, value: f64 },
    #[error("occupancy {count} at site {site} exceeds the hard cap {cap}")]
    Explosion { site: usize, count: u64, cap: u64 },
    #[error("truncated state space has {states} states, above the limit {limit}")]
    StateSpaceOverflow { states: u128, limit: usize },
    #[error("truncation leaked {mass:e} probability, above the allowed {allowed:e}")]
    TruncationTooLarge { mass: f64, allowed: f64 },
    #[error("log-Laplace solution went negative even at dt = {dt:e}")]
    PersistentNegativity { dt: f64 },
    #[error("comparison coupling requires {0}")]
    ComparisonViolated(&'static str),
    #[error("coupling domination violated at site {site}")]
    DominationViolated { site: usize },
}
