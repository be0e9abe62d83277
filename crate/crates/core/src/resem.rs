//! Interacting Wright-Fisher diffusions with selection and mutation, the
//! single-site diffusion pair used for the boundary estimates, and the exact
//! moment-dual chain.
//!
//! The system on a lattice with kernel `q` is
//!
//! ```text
//! dX(i) = Σ_j q(j,i)(X(j) - X(i)) dt + s X(i)(1 - X(i)) dt - m X(i) dt
//!         + sqrt(2 r X(i)(1 - X(i))) dB(i)
//! ```
//!
//! integrated by explicit Euler-Maruyama with projection onto `[0,1]`.
//! Every integrator also has a two-level variant that runs step `h` and
//! step `h/2` on the same Brownian path; the difference of the two
//! estimates is the Euler bias budget used by the statistical checks.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::branco::check_grid;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::stats::EnsembleStats;
use crate::uniformization::{SparseGenerator, DEFAULT_TOLERANCE};

/// Default Euler step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Resampling `r`, selection `s` and mutation `m` rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResemParams {
    pub resampling: f64,
    pub selection: f64,
    pub mutation: f64,
}

impl ResemParams {
    pub fn new(resampling: f64, selection: f64, mutation: f64) -> Result<Self> {
        let p = Self {
            resampling,
            selection,
            mutation,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.resampling, self.selection, self.mutation];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("rates r, s, m must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// A `[0,1]`-valued field on the sites.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyState {
    values: Vec<f64>,
}

impl FrequencyState {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(site) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::OutOfUnitInterval {
                site,
                value: values[site],
            });
        }
        Ok(Self { values })
    }

    pub fn zeros(sites: usize) -> Self {
        Self {
            values: vec![0.0; sites],
        }
    }

    pub fn constant(sites: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; sites])
    }

    pub fn point(sites: usize, site: usize, value: f64) -> Result<Self> {
        let mut values = vec![0.0; sites];
        values[site] = value;
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, site: usize) -> f64 {
        self.values[site]
    }

    /// `Σ_i φ(i)`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("step size must be positive"))
    }
}

/// Splits `[from, to]` into equal steps no longer than `h`.
fn substeps(from: f64, to: f64, h: f64) -> (usize, f64) {
    let span = to - from;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let n = libm::ceil(span / h * (1.0 - 1e-12)).max(1.0) as usize;
    (n, span / n as f64)
}

fn fill_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], scale: f64) {
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * scale;
    }
}

/// Wright-Fisher noise amplitude `sqrt(2 r x(1-x))`.
fn wf_noise(r: f64, x: f64) -> f64 {
    libm::sqrt((2.0 * r * x * (1.0 - x)).max(0.0))
}

/// Clamps onto `[0,1]` and returns the distance moved.
fn project(x: &mut f64) -> f64 {
    let raw = *x;
    *x = raw.clamp(0.0, 1.0);
    (raw - *x).abs()
}

/// Size of one unprojected Euler step and the correction applied by the
/// projection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub max_increment: f64,
    pub max_projection: f64,
}

/// One Euler-Maruyama step with Brownian increments `dbrown` over `dt`.
pub fn resem_step(
    x: &mut [f64],
    p: &ResemParams,
    lat: &Lattice,
    dt: f64,
    dbrown: &[f64],
    scratch: &mut Vec<f64>,
) -> StepReport {
    scratch.clear();
    scratch.extend_from_slice(x);
    let old = &scratch[..];
    let mut report = StepReport::default();
    for (i, xi) in x.iter_mut().enumerate() {
        let v = old[i];
        let migration: f64 = lat.in_edges(i).iter().map(|&(j, q)| q * (old[j] - v)).sum();
        let drift = migration + p.selection * v * (1.0 - v) - p.mutation * v;
        let increment = drift * dt + wf_noise(p.resampling, v) * dbrown[i];
        *xi = v + increment;
        report.max_increment = report.max_increment.max(increment.abs());
        report.max_projection = report.max_projection.max(project(xi));
    }
    report
}

/// Runs a step function over `t_grid` at step `h`.
fn integrate<S, R, F>(
    mut state: S,
    dims: usize,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
    mut step: F,
) -> Result<Vec<S>>
where
    S: Clone,
    R: Rng + ?Sized,
    F: FnMut(&mut S, f64, &[f64]),
{
    check_step(h)?;
    check_grid(t_grid)?;
    let mut noise = vec![0.0; dims];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &g in t_grid {
        let (n, dt) = substeps(t, g, h);
        for _ in 0..n {
            fill_normals(rng, &mut noise, libm::sqrt(dt));
            step(&mut state, dt, &noise);
        }
        t = t.max(g);
        out.push(state.clone());
    }
    Ok(out)
}

/// Runs a step function at `h` and at `h/2` on a shared Brownian path: the
/// coarse increment is the sum of the two fine ones.
fn integrate_two_level<S, R, F>(
    init: S,
    dims: usize,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
    mut step: F,
) -> Result<TwoLevel<Vec<S>>>
where
    S: Clone,
    R: Rng + ?Sized,
    F: FnMut(&mut S, f64, &[f64]),
{
    check_step(h)?;
    check_grid(t_grid)?;
    let (mut coarse, mut fine) = (init.clone(), init);
    let (mut first, mut second, mut sum) = (vec![0.0; dims], vec![0.0; dims], vec![0.0; dims]);
    let mut t = 0.0;
    let mut out = TwoLevel {
        coarse: Vec::with_capacity(t_grid.len()),
        fine: Vec::with_capacity(t_grid.len()),
    };
    for &g in t_grid {
        let (n, dt) = substeps(t, g, h);
        for _ in 0..n {
            fill_normals(rng, &mut first, libm::sqrt(dt / 2.0));
            fill_normals(rng, &mut second, libm::sqrt(dt / 2.0));
            for k in 0..dims {
                sum[k] = first[k] + second[k];
            }
            step(&mut fine, dt / 2.0, &first);
            step(&mut fine, dt / 2.0, &second);
            step(&mut coarse, dt, &sum);
        }
        t = t.max(g);
        out.coarse.push(coarse.clone());
        out.fine.push(fine.clone());
    }
    Ok(out)
}

/// Results at step `h` (`coarse`) and `h/2` (`fine`) on the same noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLevel<T> {
    pub coarse: T,
    pub fine: T,
}

fn check_resem(phi0: &FrequencyState, p: &ResemParams, lat: &Lattice) -> Result<()> {
    p.validate()?;
    if phi0.len() != lat.len() {
        return Err(Error::DimensionMismatch {
            expected: lat.len(),
            got: phi0.len(),
        });
    }
    Ok(())
}

/// Euler-Maruyama path of the system sampled at `t_grid`.
pub fn simulate_resem<R: Rng + ?Sized>(
    phi0: &FrequencyState,
    p: &ResemParams,
    lat: &Lattice,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<FrequencyState>> {
    check_resem(phi0, p, lat)?;
    let mut scratch = Vec::with_capacity(lat.len());
    let raw = integrate(phi0.values.clone(), lat.len(), h, t_grid, rng, |x, dt, db| {
        resem_step(x, p, lat, dt, db, &mut scratch);
    })?;
    Ok(raw.into_iter().map(|values| FrequencyState { values }).collect())
}

/// [`simulate_resem`] at `h` and `h/2` on one Brownian path.
pub fn simulate_resem_two_level<R: Rng + ?Sized>(
    phi0: &FrequencyState,
    p: &ResemParams,
    lat: &Lattice,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<TwoLevel<Vec<FrequencyState>>> {
    check_resem(phi0, p, lat)?;
    let mut scratch = Vec::with_capacity(lat.len());
    let raw = integrate_two_level(phi0.values.clone(), lat.len(), h, t_grid, rng, |x, dt, db| {
        resem_step(x, p, lat, dt, db, &mut scratch);
    })?;
    let wrap = |v: Vec<Vec<f64>>| v.into_iter().map(|values| FrequencyState { values }).collect();
    Ok(TwoLevel {
        coarse: wrap(raw.coarse),
        fine: wrap(raw.fine),
    })
}

/// Time at which an Euler path first hits the zero field, or `None` if it is
/// still alive at `t_max`.
pub fn extinction_time<R: Rng + ?Sized>(
    phi0: &FrequencyState,
    p: &ResemParams,
    lat: &Lattice,
    t_max: f64,
    h: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    check_resem(phi0, p, lat)?;
    check_step(h)?;
    let mut x = phi0.values.clone();
    let mut noise = vec![0.0; lat.len()];
    let mut scratch = Vec::with_capacity(lat.len());
    let (n, dt) = substeps(0.0, t_max, h);
    if x.iter().all(|&v| v == 0.0) {
        return Ok(Some(0.0));
    }
    for k in 0..n {
        fill_normals(rng, &mut noise, libm::sqrt(dt));
        resem_step(&mut x, p, lat, dt, &noise, &mut scratch);
        if x.iter().all(|&v| v == 0.0) {
            return Ok(Some((k + 1) as f64 * dt));
        }
    }
    Ok(None)
}

/// [`extinction_time`] at `h` and `h/2` on one Brownian path.
pub fn extinction_time_two_level<R: Rng + ?Sized>(
    phi0: &FrequencyState,
    p: &ResemParams,
    lat: &Lattice,
    t_max: f64,
    h: f64,
    rng: &mut R,
) -> Result<TwoLevel<Option<f64>>> {
    check_resem(phi0, p, lat)?;
    check_step(h)?;
    let dims = lat.len();
    let (mut coarse, mut fine) = (phi0.values.clone(), phi0.values.clone());
    let mut hit = TwoLevel {
        coarse: None,
        fine: None,
    };
    if phi0.is_zero() {
        return Ok(TwoLevel {
            coarse: Some(0.0),
            fine: Some(0.0),
        });
    }
    let (mut first, mut second, mut sum) = (vec![0.0; dims], vec![0.0; dims], vec![0.0; dims]);
    let mut scratch = Vec::with_capacity(dims);
    let (n, dt) = substeps(0.0, t_max, h);
    for k in 0..n {
        fill_normals(rng, &mut first, libm::sqrt(dt / 2.0));
        fill_normals(rng, &mut second, libm::sqrt(dt / 2.0));
        let now = (k + 1) as f64 * dt;
        if hit.fine.is_none() {
            resem_step(&mut fine, p, lat, dt / 2.0, &first, &mut scratch);
            resem_step(&mut fine, p, lat, dt / 2.0, &second, &mut scratch);
            if fine.iter().all(|&v| v == 0.0) {
                hit.fine = Some(now);
            }
        }
        if hit.coarse.is_none() {
            for d in 0..dims {
                sum[d] = first[d] + second[d];
            }
            resem_step(&mut coarse, p, lat, dt, &sum, &mut scratch);
            if coarse.iter().all(|&v| v == 0.0) {
                hit.coarse = Some(now);
            }
        }
        if hit.fine.is_some() && hit.coarse.is_some() {
            break;
        }
    }
    Ok(hit)
}

/// Fraction of replicates that reach the zero field by `t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtinctionEstimate {
    pub probability: f64,
    pub standard_error: f64,
    /// Fraction still alive at `t_max`; the estimate is biased low by at
    /// most this much.
    pub censored: f64,
    pub replicates: u64,
}

impl ExtinctionEstimate {
    pub fn from_stats(extinct: &EnsembleStats) -> Self {
        Self {
            probability: extinct.mean(),
            standard_error: extinct.standard_error(),
            censored: 1.0 - extinct.mean(),
            replicates: extinct.count(),
        }
    }
}

pub fn extinction_probability<R: Rng + ?Sized>(
    phi0: &FrequencyState,
    p: &ResemParams,
    lat: &Lattice,
    t_max: f64,
    h: f64,
    replicates: u64,
    rng: &mut R,
) -> Result<ExtinctionEstimate> {
    let mut stats = EnsembleStats::new();
    for _ in 0..replicates {
        let hit = extinction_time(phi0, p, lat, t_max, h, rng)?.is_some();
        stats.push(if hit { 1.0 } else { 0.0 });
    }
    Ok(ExtinctionEstimate::from_stats(&stats))
}

/// Coefficients of the single-site pair
/// `dX = a(1-X)dt - bX dt + sqrt(2rX(1-X)) dB`,
/// `dY = -cY dt + sqrt(2rY(1-Y)) dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WfPairParams {
    pub immigration: f64,
    pub emigration: f64,
    pub decay: f64,
    pub resampling: f64,
}

impl WfPairParams {
    pub fn new(immigration: f64, emigration: f64, decay: f64, resampling: f64) -> Result<Self> {
        let all = [immigration, emigration, decay, resampling];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("diffusion coefficients must be nonnegative"));
        }
        Ok(Self {
            immigration,
            emigration,
            decay,
            resampling,
        })
    }
}

fn wf_pair_step(xy: &mut (f64, f64), p: &WfPairParams, dt: f64, db: f64) {
    let (x, y) = *xy;
    let mut nx = x + (p.immigration * (1.0 - x) - p.emigration * x) * dt + wf_noise(p.resampling, x) * db;
    let mut ny = y - p.decay * y * dt + wf_noise(p.resampling, y) * db;
    project(&mut nx);
    project(&mut ny);
    *xy = (nx, ny);
}

fn check_unit(z: f64) -> Result<()> {
    if (0.0..=1.0).contains(&z) {
        Ok(())
    } else {
        Err(Error::OutOfUnitInterval { site: 0, value: z })
    }
}

/// `(X_t, Y_t)` started from `(z, z)` and driven by one Brownian motion.
pub fn wf_pair_simulate<R: Rng + ?Sized>(
    z: f64,
    p: &WfPairParams,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    check_unit(z)?;
    integrate((z, z), 1, h, t_grid, rng, |xy, dt, db| wf_pair_step(xy, p, dt, db[0]))
}

/// [`wf_pair_simulate`] at `h` and `h/2` on one Brownian path.
pub fn wf_pair_simulate_two_level<R: Rng + ?Sized>(
    z: f64,
    p: &WfPairParams,
    h: f64,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<TwoLevel<Vec<(f64, f64)>>> {
    check_unit(z)?;
    integrate_two_level((z, z), 1, h, t_grid, rng, |xy, dt, db| wf_pair_step(xy, p, dt, db[0]))
}

/// Coefficients of the moment-dual chain on `{0, …, k, ∞}`:
/// `n → n-1` at `a·n + r·n(n-1)` and `n → ∞` at `b·n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentDualChain {
    pub start: usize,
    generator: SparseGenerator,
}

impl MomentDualChain {
    pub fn new(k: usize, a: f64, b: f64, r: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("moment order must be at least 1"));
        }
        if [a, b, r].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("chain rates must be nonnegative"));
        }
        // States 0..=k, then the cemetery ∞ at index k+1.
        let infinity = k + 1;
        let mut rows = vec![Vec::new(); k + 2];
        for (n, row) in rows.iter_mut().enumerate().take(k + 1).skip(1) {
            let nf = n as f64;
            row.push((n - 1, a * nf + r * nf * (nf - 1.0)));
            row.push((infinity, b * nf));
        }
        Ok(Self {
            start: k,
            generator: SparseGenerator::from_rows(&rows),
        })
    }

    /// Law of `K_t` over `{0, …, k, ∞}`.
    pub fn distribution(&self, t: f64) -> Result<Vec<f64>> {
        let mut mu = vec![0.0; self.generator.states()];
        mu[self.start] = 1.0;
        self.generator.propagate_distribution(&mu, t, DEFAULT_TOLERANCE)
    }
}

/// `E^k[x^{K_t}]` with `x^0 = 1` and `x^∞ = 0`; equals `E^x[X_t^k]` for the
/// diffusion `dX = a(1-X)dt - bX dt + sqrt(2rX(1-X)) dB`.
pub fn moment_dual_expectation(x: f64, k: usize, a: f64, b: f64, r: f64, t: f64) -> Result<f64> {
    check_unit(x)?;
    let law = MomentDualChain::new(k, a, b, r)?.distribution(t)?;
    Ok(law[..=k].iter().enumerate().map(|(n, w)| w * libm::pow(x, n as f64)).sum())
}
