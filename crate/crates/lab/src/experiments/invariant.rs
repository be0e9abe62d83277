use branco_core::branco::simulate;
use branco_core::duality::duality_functional;
use branco_core::resem::extinction_time_two_level;

use super::{bridge, panel_key, phi_fields, tags, ExperimentError, Result};
use crate::config::ExperimentConfig;
use crate::ensemble::ensemble;
use crate::report::{z_crit, Entry, Report};

/// Compares the particle functional `E[Ψ(X_t, φ)]` at the last grid time
/// with the probability that the dual diffusion started from `φ` dies out
/// by `t_max`.
///
/// The tolerance adds the Euler budget and the censored fraction (dual
/// paths still alive at `t_max`). A censored fraction above
/// `max_censored` makes the entry inconclusive. Earlier grid times are
/// reported as diagnostics of the approach to equilibrium.
pub fn run_invariant_convergence_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    if !cfg.lattice.is_torus() {
        return Err(ExperimentError::Precondition("homogeneous torus lattice"));
    }
    let lat = cfg.lattice.build()?;
    let sites = lat.len();
    let bridge = bridge(&cfg.rates)?;
    let alpha = bridge.alpha;
    let phis = phi_fields(cfg, sites)?;
    let (nt, np) = (cfg.t_grid.len(), phis.len());

    let primal = ensemble(cfg.replicates, cfg.master_seed, tags::INVARIANT_PRIMAL, nt * np, |rng, out| {
        let x0 = cfg.init.sample(sites, rng);
        let path = simulate(&x0, &cfg.rates, &lat, &cfg.t_grid, rng)?;
        for (ti, x) in path.iter().enumerate() {
            for (pi, phi) in phis.iter().enumerate() {
                out[ti * np + pi] = duality_functional(x, phi, alpha);
            }
        }
        Ok(())
    })?;

    let dual_lat = lat.transposed();
    let dual = ensemble(cfg.dual_replicates, cfg.master_seed, tags::INVARIANT_DUAL, 2 * np, |rng, out| {
        for (pi, phi) in phis.iter().enumerate() {
            let hit = extinction_time_two_level(phi, &bridge.resem, &dual_lat, cfg.t_max, cfg.h, rng)?;
            out[2 * pi] = f64::from(u8::from(hit.coarse.is_some()));
            out[2 * pi + 1] = f64::from(u8::from(hit.fine.is_some()));
        }
        Ok(())
    })?;

    let mut report = Report::new("invariant");
    let zc = z_crit(np);
    let last = nt - 1;
    for (pi, phi) in cfg.phi_panel.iter().enumerate() {
        let (coarse, fine) = (&dual[2 * pi], &dual[2 * pi + 1]);
        let extinct = (fine.mean(), fine.standard_error());
        for ti in 0..last {
            let k = ti * np + pi;
            report.push(Entry::diagnostic(
                panel_key(cfg.t_grid[ti], &phi.label()),
                (primal[k].mean(), primal[k].standard_error()),
                extinct,
            ));
        }
        let censored = 1.0 - fine.mean();
        let budget = (fine.mean() - coarse.mean()).abs() + censored;
        let k = last * np + pi;
        let entry = Entry::agreement(
            panel_key(cfg.t_grid[last], &phi.label()),
            (primal[k].mean(), primal[k].standard_error()),
            extinct,
            budget,
            zc,
        );
        report.push(if censored > cfg.max_censored {
            entry.mark_inconclusive()
        } else {
            entry
        });
        report.note(format!("phi = {}: censored dual mass {censored} at t_max = {}", phi.label(), cfg.t_max));
    }
    Ok(report)
}
