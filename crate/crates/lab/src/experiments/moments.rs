use branco_core::resem::{moment_dual_expectation, wf_pair_simulate_two_level, WfPairParams};

use super::{tags, Result};
use crate::ensemble::ensemble;
use crate::report::{Entry, Report};

/// Coefficients of `dX = a(1-X)dt - bX dt + sqrt(2rX(1-X)) dB`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCase {
    pub a: f64,
    pub b: f64,
    pub r: f64,
}

const THRESHOLD: f64 = 3.0;

/// Euler estimates of `E^x[X_t^k]` against the exact moment-dual chain,
/// within 3 SE plus the Euler budget.
pub fn run_moment_dual_check(
    cases: &[MomentCase],
    x: f64,
    orders: &[u32],
    t: f64,
    h: f64,
    replicates: u64,
    master_seed: u64,
) -> Result<Report> {
    let mut report = Report::new("moment-dual");
    let nk = orders.len();
    for (ci, case) in cases.iter().enumerate() {
        let p = WfPairParams::new(case.a, case.b, 0.0, case.r)?;
        let tag = tags::MOMENT_DUAL + ((ci as u64) << 32);
        let stats = ensemble(replicates, master_seed, tag, 2 * nk, |rng, out| {
            let path = wf_pair_simulate_two_level(x, &p, h, &[t], rng)?;
            let (coarse, fine) = (path.coarse[0].0, path.fine[0].0);
            for (ki, &k) in orders.iter().enumerate() {
                out[2 * ki] = coarse.powi(k as i32);
                out[2 * ki + 1] = fine.powi(k as i32);
            }
            Ok(())
        })?;
        for (ki, &k) in orders.iter().enumerate() {
            let (coarse, fine) = (&stats[2 * ki], &stats[2 * ki + 1]);
            let exact = moment_dual_expectation(x, k as usize, case.a, case.b, case.r, t)?;
            report.push(Entry::agreement(
                format!("a={};b={};r={};k={k};t={t}", case.a, case.b, case.r),
                (fine.mean(), fine.standard_error()),
                (exact, 0.0),
                (fine.mean() - coarse.mean()).abs(),
                THRESHOLD,
            ));
        }
    }
    Ok(report)
}
