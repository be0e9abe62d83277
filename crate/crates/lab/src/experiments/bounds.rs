use branco_core::branco::{explicit_mean_bound, factorial_moment, rising_factorial, simulate, simulate_from_infinity};
use branco_core::loglaplace::{subduality_rhs, DEFAULT_STEP};

use super::{tags, ExperimentError, Result};
use crate::config::ExperimentConfig;
use crate::ensemble::ensemble;
use crate::report::{Entry, Report};

/// Allowance, in standard errors, of the one-sided statistical checks.
const ONE_SIDED: f64 = 3.0;

fn deterministic_start(cfg: &ExperimentConfig, sites: usize) -> Result<branco_core::OccupancyState> {
    cfg.init
        .counts(sites)
        .ok_or(ExperimentError::Precondition("deterministic initial counts"))
}

/// `E[|X_t|^{⟨k⟩}] ≤ |x|^{⟨k⟩} e^{kbt}`, accepted when the estimate is
/// below the bound inflated by `1 + 3·(relative SE)`.
pub fn kmom_entries(cfg: &ExperimentConfig, orders: &[u32]) -> Result<Vec<Entry>> {
    let lat = cfg.lattice.build()?;
    let x0 = deterministic_start(cfg, lat.len())?;
    let (nt, nk) = (cfg.t_grid.len(), orders.len());
    let stats = ensemble(cfg.replicates, cfg.master_seed, tags::KMOM, nt * nk, |rng, out| {
        let path = simulate(&x0, &cfg.rates, &lat, &cfg.t_grid, rng)?;
        for (ti, x) in path.iter().enumerate() {
            for (ki, &k) in orders.iter().enumerate() {
                out[ti * nk + ki] = factorial_moment(x, k);
            }
        }
        Ok(())
    })?;
    let mut entries = Vec::new();
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        for (ki, &k) in orders.iter().enumerate() {
            let s = &stats[ti * nk + ki];
            let bound = rising_factorial(x0.total() as f64, k) * (k as f64 * cfg.rates.branching * t).exp();
            entries.push(Entry::at_most(
                format!("kmom:k={k};t={t}"),
                (s.mean(), s.standard_error()),
                bound,
                ONE_SIDED * bound * s.relative_standard_error(),
                0.0,
            ));
        }
    }
    Ok(entries)
}

/// Largest per-site sample mean of the process started with `n_cap`
/// particles per site, against the explicit bound at each positive grid
/// time. No statistical allowance is granted.
pub fn explicit_entries(cfg: &ExperimentConfig) -> Result<Vec<Entry>> {
    let lat = cfg.lattice.build()?;
    let sites = lat.len();
    if cfg.rates.pair_rate() <= 0.0 {
        return Err(ExperimentError::Precondition("a + c > 0"));
    }
    let times: Vec<f64> = cfg.t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    let stats = ensemble(cfg.replicates, cfg.master_seed, tags::EXPLICIT, times.len() * sites, |rng, out| {
        let path = simulate_from_infinity(cfg.n_cap, &cfg.rates, &lat, &times, rng)?;
        for (ti, x) in path.iter().enumerate() {
            for i in 0..sites {
                out[ti * sites + i] = x.get(i) as f64;
            }
        }
        Ok(())
    })?;
    let mut entries = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let worst = stats[ti * sites..(ti + 1) * sites]
            .iter()
            .max_by(|a, b| a.mean().total_cmp(&b.mean()))
            .expect("at least one site");
        entries.push(Entry::at_most(
            format!("explicit:n_cap={};t={t}", cfg.n_cap),
            (worst.mean(), worst.standard_error()),
            explicit_mean_bound(&cfg.rates, t)?,
            0.0,
            0.0,
        ));
    }
    Ok(entries)
}

/// `E^x[e^{-⟨φ,X_t⟩}] ≥ exp(-⟨x, u_t⟩)` with `u` the log-Laplace solution
/// of the dominating super random walk, for every `(t, φ)` in the panel.
pub fn subduality_entries(cfg: &ExperimentConfig) -> Result<Vec<Entry>> {
    let lat = cfg.lattice.build()?;
    let sites = lat.len();
    let x0 = deterministic_start(cfg, sites)?;
    let fields: Vec<Vec<f64>> = cfg.phi_panel.iter().map(|p| p.field(sites)).collect();
    let (nt, np) = (cfg.t_grid.len(), fields.len());
    let stats = ensemble(cfg.replicates, cfg.master_seed, tags::SUBDUALITY, nt * np, |rng, out| {
        let path = simulate(&x0, &cfg.rates, &lat, &cfg.t_grid, rng)?;
        for (ti, x) in path.iter().enumerate() {
            for (pi, phi) in fields.iter().enumerate() {
                let inner: f64 = phi.iter().zip(x.counts()).map(|(f, &n)| f * n as f64).sum();
                out[ti * np + pi] = (-inner).exp();
            }
        }
        Ok(())
    })?;
    let mut entries = Vec::new();
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        for (pi, phi) in fields.iter().enumerate() {
            let s = &stats[ti * np + pi];
            let rhs = subduality_rhs(&x0, phi, &cfg.rates, &lat, t, DEFAULT_STEP)?;
            entries.push(Entry::at_least(
                format!("subduality:t={t};phi={}", cfg.phi_panel[pi].label()),
                (s.mean(), s.standard_error()),
                rhs,
                0.0,
                ONE_SIDED,
            ));
        }
    }
    Ok(entries)
}

/// Moment bound for `k = 1, 2, 3`, the explicit bound (when `a + c > 0`)
/// and the subduality bound.
pub fn run_bounds_suite(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new("bounds");
    for e in kmom_entries(cfg, &[1, 2, 3])? {
        report.push(e);
    }
    if cfg.rates.pair_rate() > 0.0 {
        for e in explicit_entries(cfg)? {
            report.push(e);
        }
    } else {
        report.note("explicit bound skipped: a + c = 0");
    }
    for e in subduality_entries(cfg)? {
        report.push(e);
    }
    for e in report.checks().filter(|e| e.panel_key.starts_with("explicit")).cloned().collect::<Vec<_>>() {
        report.note(format!("{}: slack {}", e.panel_key, e.reference - e.estimate));
    }
    Ok(report)
}
