//! Exact event-driven simulation of the `(q,a,b,c,d)` particle system.
//!
//! Per site `i` with `x = x(i)` particles the channels fire at
//!
//! | channel      | rate               | effect            |
//! |--------------|--------------------|-------------------|
//! | jump `i → j` | `q(i,j)·x`         | `-δ_i + δ_j`      |
//! | annihilation | `a·x(x-1)`         | `-2δ_i`           |
//! | branching    | `b·x`              | `+δ_i`            |
//! | coalescence  | `c·x(x-1)`         | `-δ_i`            |
//! | death        | `d·x`              | `-δ_i`            |
//!
//! Each pair on a site annihilates at rate `2a` and there are `x(x-1)/2`
//! pairs, hence `a·x(x-1)` in total; likewise for coalescence.
//!
//! The simulator keeps per-site aggregated rates in a binary sum tree and
//! refreshes only the sites touched by an event.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rng::{exp_waiting, uniform_below};
use crate::sum_tree::SumTree;

/// Default occupancy cap; reaching it indicates a bug, since finite systems
/// do not explode.
pub const DEFAULT_OCCUPANCY_CAP: u64 = 1_000_000_000;

/// Rates `(a, b, c, d)`: annihilation, branching, coalescence, death.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateParams {
    pub annihilation: f64,
    pub branching: f64,
    pub coalescence: f64,
    pub death: f64,
}

impl RateParams {
    pub fn new(annihilation: f64, branching: f64, coalescence: f64, death: f64) -> Result<Self> {
        let p = Self {
            annihilation,
            branching,
            coalescence,
            death,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.annihilation, self.branching, self.coalescence, self.death];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter("rates a, b, c, d must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `a + c`, the total pair-removal strength; duality needs it positive.
    pub fn pair_rate(&self) -> f64 {
        self.annihilation + self.coalescence
    }

    pub fn require_pair_interaction(&self) -> Result<()> {
        if self.pair_rate() > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter("a + c must be positive"))
        }
    }
}

/// Particle counts per site together with their cached sum.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupancyState {
    counts: Vec<u64>,
    total: u64,
}

impl OccupancyState {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn zeros(sites: usize) -> Self {
        Self::new(vec![0; sites])
    }

    pub fn uniform(sites: usize, count: u64) -> Self {
        Self::new(vec![count; sites])
    }

    /// `count · δ_site`.
    pub fn point(sites: usize, site: usize, count: u64) -> Self {
        let mut counts = vec![0; sites];
        counts[site] = count;
        Self::new(counts)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn get(&self, site: usize) -> u64 {
        self.counts[site]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn add(&mut self, site: usize, n: u64) {
        self.counts[site] += n;
        self.total += n;
    }

    /// Removes `n` particles from `site`. Panics if fewer are present.
    pub fn remove(&mut self, site: usize, n: u64) {
        assert!(self.counts[site] >= n, "removing more particles than present");
        self.counts[site] -= n;
        self.total -= n;
    }

    /// Componentwise order `x ≤ y`.
    pub fn le(&self, other: &OccupancyState) -> bool {
        self.counts.len() == other.counts.len()
            && self.counts.iter().zip(&other.counts).all(|(a, b)| a <= b)
    }
}

impl From<Vec<u64>> for OccupancyState {
    fn from(counts: Vec<u64>) -> Self {
        Self::new(counts)
    }
}

/// Rates of the five channels at one site.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SiteRates {
    /// Total jump rate `x(i) Σ_j q(i,j)`.
    pub jump: f64,
    pub annihilation: f64,
    pub branching: f64,
    pub coalescence: f64,
    pub death: f64,
}

impl SiteRates {
    pub fn compute(count: u64, exit_rate: f64, p: &RateParams) -> Self {
        let x = count as f64;
        let pairs = x * (x - 1.0).max(0.0);
        Self {
            jump: x * exit_rate,
            annihilation: p.annihilation * pairs,
            branching: p.branching * x,
            coalescence: p.coalescence * pairs,
            death: p.death * x,
        }
    }

    pub fn total(&self) -> f64 {
        self.jump + self.annihilation + self.branching + self.coalescence + self.death
    }
}

/// All channel rates of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTable {
    pub sites: Vec<SiteRates>,
    /// `(i, j, q(i,j)·x(i))` for every edge with a positive rate.
    pub jumps: Vec<(usize, usize, f64)>,
    pub total: f64,
}

pub fn event_rates(x: &OccupancyState, p: &RateParams, lat: &Lattice) -> Result<EventTable> {
    check_len(lat, x.len())?;
    let sites: Vec<SiteRates> = (0..lat.len())
        .map(|i| SiteRates::compute(x.get(i), lat.exit_rate(i), p))
        .collect();
    let jumps = lat
        .edges()
        .map(|(i, j, q)| (i, j, q * x.get(i) as f64))
        .filter(|&(_, _, r)| r > 0.0)
        .collect();
    let total = sites.iter().map(SiteRates::total).sum();
    Ok(EventTable { sites, jumps, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Jump { from: usize, to: usize },
    Annihilation(usize),
    Branching(usize),
    Coalescence(usize),
    Death(usize),
}

pub(crate) fn check_len(lat: &Lattice, got: usize) -> Result<()> {
    if got != lat.len() {
        Err(Error::DimensionMismatch {
            expected: lat.len(),
            got,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    let starts_ok = t_grid.first().is_none_or(|&t| t >= 0.0);
    let monotone = t_grid.windows(2).all(|w| w[0] <= w[1]);
    if starts_ok && monotone && t_grid.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(Error::BadTimeGrid)
    }
}

/// Picks a jump target from `i` proportionally to `q(i,·)`.
pub(crate) fn pick_target<R: Rng + ?Sized>(lat: &Lattice, from: usize, rng: &mut R) -> usize {
    let edges = lat.out_edges(from);
    let mut u = uniform_below(rng, lat.exit_rate(from));
    for &(j, q) in edges {
        if u < q {
            return j;
        }
        u -= q;
    }
    edges.last().expect("jump from a site without edges").0
}

/// Gillespie simulator for one replicate.
#[derive(Debug, Clone)]
pub struct BrancoSimulator<'a> {
    lattice: &'a Lattice,
    params: RateParams,
    state: OccupancyState,
    exit: Vec<f64>,
    time: f64,
    tree: SumTree,
    cap: u64,
}

impl<'a> BrancoSimulator<'a> {
    pub fn new(lattice: &'a Lattice, params: RateParams, x0: OccupancyState) -> Result<Self> {
        params.validate()?;
        check_len(lattice, x0.len())?;
        let exit = (0..lattice.len()).map(|i| lattice.exit_rate(i)).collect();
        let mut sim = Self {
            lattice,
            params,
            state: x0,
            exit,
            time: 0.0,
            tree: SumTree::new(lattice.len()),
            cap: DEFAULT_OCCUPANCY_CAP,
        };
        for i in 0..lattice.len() {
            sim.refresh(i);
        }
        Ok(sim)
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn state(&self) -> &OccupancyState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    fn refresh(&mut self, site: usize) {
        let rates = SiteRates::compute(self.state.get(site), self.exit[site], &self.params);
        self.tree.set(site, rates.total());
    }

    fn check_cap(&self, site: usize) -> Result<()> {
        let count = self.state.get(site);
        if count > self.cap {
            Err(Error::Explosion {
                site,
                count,
                cap: self.cap,
            })
        } else {
            Ok(())
        }
    }

    fn choose_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Event {
        let site = self.tree.find(uniform_below(rng, self.tree.total()));
        let r = SiteRates::compute(self.state.get(site), self.exit[site], &self.params);
        let mut u = uniform_below(rng, r.total());
        let channels = [
            (r.annihilation, Event::Annihilation(site)),
            (r.branching, Event::Branching(site)),
            (r.coalescence, Event::Coalescence(site)),
            (r.death, Event::Death(site)),
        ];
        for (rate, event) in channels {
            if u < rate {
                return event;
            }
            u -= rate;
        }
        if r.jump > 0.0 {
            Event::Jump {
                from: site,
                to: pick_target(self.lattice, site, rng),
            }
        } else {
            // Rounding pushed u past the last channel; take the last one with
            // positive rate.
            channels
                .iter()
                .rev()
                .find(|(rate, _)| *rate > 0.0)
                .map(|&(_, e)| e)
                .expect("site selected with zero rate")
        }
    }

    fn apply(&mut self, event: Event) -> Result<()> {
        match event {
            Event::Jump { from, to } => {
                self.state.remove(from, 1);
                self.state.add(to, 1);
                self.refresh(from);
                self.refresh(to);
                self.check_cap(to)?;
            }
            Event::Annihilation(i) => {
                self.state.remove(i, 2);
                self.refresh(i);
            }
            Event::Branching(i) => {
                self.state.add(i, 1);
                self.refresh(i);
                self.check_cap(i)?;
            }
            Event::Coalescence(i) | Event::Death(i) => {
                self.state.remove(i, 1);
                self.refresh(i);
            }
        }
        Ok(())
    }

    /// Performs the next event if it happens no later than `horizon`.
    ///
    /// Returns the event and its time, or `None` (with the clock moved to
    /// `horizon`) when the next event would fall after it. Discarding the
    /// overshooting waiting time is exact by memorylessness.
    pub fn step_until<R: Rng + ?Sized>(
        &mut self,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Option<(f64, Event)>> {
        let total = self.tree.total();
        let wait = exp_waiting(rng, total);
        if self.time + wait > horizon {
            self.time = self.time.max(horizon);
            return Ok(None);
        }
        self.time += wait;
        let event = self.choose_event(rng);
        self.apply(event)?;
        Ok(Some((self.time, event)))
    }

    /// Advances the process to time `t`.
    pub fn run_until<R: Rng + ?Sized>(&mut self, t: f64, rng: &mut R) -> Result<()> {
        while self.step_until(t, rng)?.is_some() {}
        Ok(())
    }
}

/// States of the process at each time of `t_grid`.
pub fn simulate<R: Rng + ?Sized>(
    x0: &OccupancyState,
    p: &RateParams,
    lat: &Lattice,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<OccupancyState>> {
    check_grid(t_grid)?;
    let mut sim = BrancoSimulator::new(lat, *p, x0.clone())?;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        sim.run_until(t, rng)?;
        out.push(sim.state().clone());
    }
    Ok(out)
}

/// Desk-scale stand-in for the process started with infinitely many
/// particles: `n_cap` particles on every site.
pub fn simulate_from_infinity<R: Rng + ?Sized>(
    n_cap: u64,
    p: &RateParams,
    lat: &Lattice,
    t_grid: &[f64],
    rng: &mut R,
) -> Result<Vec<OccupancyState>> {
    p.require_pair_interaction()?;
    simulate(&OccupancyState::uniform(lat.len(), n_cap), p, lat, t_grid, rng)
}

/// Upper bound on the per-site mean of the process started at infinity:
/// `r / ((2a+c)(1 - e^{-rt}))` with `r = a+b+c-d`, or `1/((2a+c)t)` when
/// `r = 0`.
pub fn explicit_mean_bound(p: &RateParams, t: f64) -> Result<f64> {
    p.require_pair_interaction()?;
    if t <= 0.0 {
        return Err(Error::InvalidParameter("bound needs t > 0"));
    }
    let r = p.annihilation + p.branching + p.coalescence - p.death;
    let removal = 2.0 * p.annihilation + p.coalescence;
    if r == 0.0 {
        Ok(1.0 / (removal * t))
    } else {
        Ok(r / (removal * -libm::expm1(-r * t)))
    }
}

/// Rising factorial `z(z+1)⋯(z+k-1)` of `z = |x|`.
pub fn factorial_moment(x: &OccupancyState, k: u32) -> f64 {
    rising_factorial(x.total() as f64, k)
}

pub fn rising_factorial(z: f64, k: u32) -> f64 {
    (0..k).map(|j| z + j as f64).product()
}
