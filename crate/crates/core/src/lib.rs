//! Simulation and verification primitives for systems of branching,
//! annihilating and coalescing random walks ("branco-processes") and their
//! dual interacting Wright-Fisher diffusions ("resem-processes").
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or the command line lives in the `branco-lab` crate.
//!
//! Module map:
//!
//! - [`lattice`]: finite site sets with a jump kernel, kernel validation and
//!   the random-walk semigroup.
//! - [`branco`]: exact event-driven simulation of the particle system.
//! - [`couplings`]: coupled multi-type simulations (standard coupling,
//!   comparison coupling, pure-birth domination).
//! - [`resem`]: Euler-Maruyama integration of the Wright-Fisher system and
//!   the exact moment-dual chain.
//! - [`duality`]: duality function, parameter maps, generator identity,
//!   thinning and Poisson samplers.
//! - [`loglaplace`]: log-Laplace ODE of the super random walk and the
//!   subduality bound.
//! - [`oracle`]: brute-force transient distributions of truncated chains,
//!   carré du champ, covariance formula and covariance kernels.
//! - [`stats`]: mergeable ensemble accumulator.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod branco;
pub mod couplings;
pub mod duality;
mod error;
pub mod lattice;
pub mod loglaplace;
pub mod matrix;
pub mod oracle;
pub mod quadrature;
pub mod resem;
pub mod rng;
pub mod stats;
mod sum_tree;
pub mod uniformization;

pub use branco::{OccupancyState, RateParams};
pub use duality::{DualityParams, ParamBridge};
pub use error::{Error, Result};
pub use lattice::{Lattice, Shape, ValidationReport};
pub use resem::{FrequencyState, ResemParams};
pub use stats::EnsembleStats;
