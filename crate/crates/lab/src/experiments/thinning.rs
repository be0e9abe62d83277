use branco_core::branco::simulate;
use branco_core::duality::{duality_functional, thin_uniform};

use super::{bridge, panel_key, phi_fields, tags, ExperimentError, Result};
use crate::config::ExperimentConfig;
use crate::ensemble::ensemble;
use crate::report::{z_crit, Entry, Report};

/// Per-site mean checks use a plain 3σ rule.
const SITE_THRESHOLD: f64 = 3.0;

/// Compares `X_t` started from `Thin_π(X̄_0)` with `Thin_π(X̄_t)`, where
/// `X̄` is the partner system with annihilation fraction `β` and
/// `π = (1+β)/(1+α)`. The initial law configures `X̄_0`.
///
/// Panel: the duality functional at every `(t, φ)`, plus the per-site
/// means `E[X_t(i)]` against `π·E[X̄_t(i)]` at the last time.
pub fn run_thinning_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let lat = cfg.lattice.build()?;
    let sites = lat.len();
    let bridge = bridge(&cfg.rates)?;
    if cfg.beta > bridge.alpha.alpha() {
        return Err(ExperimentError::Precondition("beta ≤ alpha"));
    }
    let (partner, keep) = bridge.partner(cfg.beta)?;
    let alpha = bridge.alpha;
    let phis = phi_fields(cfg, sites)?;
    let (nt, np) = (cfg.t_grid.len(), phis.len());
    let width = nt * np + nt * sites;

    let thinned = ensemble(cfg.replicates, cfg.master_seed, tags::THINNING_PARTNER, width, |rng, out| {
        let xbar0 = cfg.init.sample(sites, rng);
        let path = simulate(&xbar0, &partner, &lat, &cfg.t_grid, rng)?;
        for (ti, xbar) in path.iter().enumerate() {
            let x = thin_uniform(xbar, keep, rng)?;
            for (pi, phi) in phis.iter().enumerate() {
                out[ti * np + pi] = duality_functional(&x, phi, alpha);
            }
            for i in 0..sites {
                out[nt * np + ti * sites + i] = xbar.get(i) as f64;
            }
        }
        Ok(())
    })?;

    let direct = ensemble(cfg.replicates, cfg.master_seed, tags::THINNING_DIRECT, width, |rng, out| {
        let x0 = thin_uniform(&cfg.init.sample(sites, rng), keep, rng)?;
        let path = simulate(&x0, &cfg.rates, &lat, &cfg.t_grid, rng)?;
        for (ti, x) in path.iter().enumerate() {
            for (pi, phi) in phis.iter().enumerate() {
                out[ti * np + pi] = duality_functional(x, phi, alpha);
            }
            for i in 0..sites {
                out[nt * np + ti * sites + i] = x.get(i) as f64;
            }
        }
        Ok(())
    })?;

    let mut report = Report::new("thinning");
    let zc = z_crit(nt * np);
    for (ti, &t) in cfg.t_grid.iter().enumerate() {
        for (pi, phi) in cfg.phi_panel.iter().enumerate() {
            let k = ti * np + pi;
            report.push(Entry::agreement(
                panel_key(t, &phi.label()),
                (direct[k].mean(), direct[k].standard_error()),
                (thinned[k].mean(), thinned[k].standard_error()),
                0.0,
                zc,
            ));
        }
    }
    let last = nt - 1;
    for i in 0..sites {
        let k = nt * np + last * sites + i;
        report.push(Entry::agreement(
            format!("mean:t={};site={i}", cfg.t_grid[last]),
            (direct[k].mean(), direct[k].standard_error()),
            (keep * thinned[k].mean(), keep * thinned[k].standard_error()),
            0.0,
            SITE_THRESHOLD,
        ));
    }
    report.note(format!(
        "beta = {}, retention = {keep}, partner rates (a, b, c, d) = ({}, {}, {}, {})",
        cfg.beta, partner.annihilation, partner.branching, partner.coalescence, partner.death
    ));
    Ok(report)
}
