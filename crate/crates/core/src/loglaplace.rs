//! Log-Laplace equation of the super random walk,
//!
//! ```text
//! u'(i) = Σ_j a(j,i)(u(j) - u(i)) + β u(i) - γ u(i)²,   u_0 = ψ,
//! ```
//!
//! solved with classic fourth-order Runge-Kutta, and the resulting lower
//! bound on Laplace functionals of the particle system.

use alloc::vec;
use alloc::vec::Vec;

use crate::branco::{check_grid, check_len, OccupancyState, RateParams};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Smallest step the solver falls back to before giving up on keeping the
/// solution nonnegative.
pub const MIN_STEP: f64 = 1e-6;

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SuperRWParams {
    /// Growth parameter `β`; may be negative.
    pub growth: f64,
    /// Activity `γ ≥ 0`.
    pub activity: f64,
    /// Underlying motion `a(i,j)` of the super random walk.
    pub motion: Lattice,
}

impl SuperRWParams {
    pub fn new(growth: f64, activity: f64, motion: Lattice) -> Result<Self> {
        if !growth.is_finite() || !activity.is_finite() || activity < 0.0 {
            return Err(Error::InvalidParameter("activity must be nonnegative and growth finite"));
        }
        Ok(Self {
            growth,
            activity,
            motion,
        })
    }

    /// The super random walk paired with a particle system: motion `q†`,
    /// growth `2a+b-d+c`, activity `2a+c`.
    pub fn subdual(p: &RateParams, lat: &Lattice) -> Result<Self> {
        p.validate()?;
        Self::new(
            2.0 * p.annihilation + p.branching - p.death + p.coalescence,
            2.0 * p.annihilation + p.coalescence,
            lat.transposed(),
        )
    }
}

/// `u_t` at each requested time.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLaplaceSolution {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl LogLaplaceSolution {
    pub fn last(&self) -> &[f64] {
        self.values.last().map_or(&[], Vec::as_slice)
    }
}

fn rhs(u: &[f64], p: &SuperRWParams, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let ui = u[i];
        let motion: f64 = p.motion.in_edges(i).iter().map(|&(j, a)| a * (u[j] - ui)).sum();
        *o = motion + p.growth * ui - p.activity * ui * ui;
    }
}

struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, u: &mut [f64], p: &SuperRWParams, dt: f64) {
        let n = u.len();
        rhs(u, p, &mut self.k[0]);
        for stage in 1..4 {
            let w = if stage == 3 { dt } else { dt / 2.0 };
            for i in 0..n {
                self.tmp[i] = u[i] + w * self.k[stage - 1][i];
            }
            rhs(&self.tmp, p, &mut self.k[stage]);
        }
        for i in 0..n {
            u[i] += dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
    }

    /// Advances by `span` in `n` equal steps, halving the step until the
    /// result stays nonnegative.
    fn advance(&mut self, u: &mut [f64], p: &SuperRWParams, span: f64, dt: f64) -> Result<()> {
        let mut n = libm::ceil(span / dt * (1.0 - 1e-12)).max(1.0) as usize;
        loop {
            let h = span / n as f64;
            let mut trial = u.to_vec();
            let mut ok = true;
            for _ in 0..n {
                self.step(&mut trial, p, h);
                if trial.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    ok = false;
                    break;
                }
            }
            if ok {
                u.copy_from_slice(&trial);
                return Ok(());
            }
            if h / 2.0 < MIN_STEP {
                return Err(Error::PersistentNegativity { dt: h });
            }
            n *= 2;
        }
    }
}

/// RK4 solution of the log-Laplace equation sampled at `t_grid`.
pub fn loglaplace_solve(psi: &[f64], p: &SuperRWParams, t_grid: &[f64], dt: f64) -> Result<LogLaplaceSolution> {
    check_len(&p.motion, psi.len())?;
    if let Some(site) = psi.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::NegativeIntensity {
            site,
            value: psi[site],
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter("step size must be positive"));
    }
    check_grid(t_grid)?;
    let mut u = psi.to_vec();
    let mut rk = Rk4::new(psi.len());
    let mut t = 0.0;
    let mut values = Vec::with_capacity(t_grid.len());
    for &g in t_grid {
        if g > t {
            rk.advance(&mut u, p, g - t, dt)?;
            t = g;
        }
        values.push(u.clone());
    }
    Ok(LogLaplaceSolution {
        times: t_grid.to_vec(),
        values,
    })
}

/// `exp(-⟨φ, u_t⟩)` with `u = 𝒰_t ψ`.
pub fn super_laplace_functional(phi: &[f64], psi: &[f64], p: &SuperRWParams, t: f64, dt: f64) -> Result<f64> {
    check_len(&p.motion, phi.len())?;
    if let Some(site) = phi.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeIntensity {
            site,
            value: phi[site],
        });
    }
    let sol = loglaplace_solve(psi, p, &[t], dt)?;
    let pairing: f64 = phi.iter().zip(sol.last()).map(|(a, b)| a * b).sum();
    Ok(libm::exp(-pairing))
}

/// Lower bound `exp(-⟨φ, 𝒰_t x⟩)` on `E^x[exp(-⟨φ, X_t⟩)]`.
pub fn subduality_rhs(x: &OccupancyState, phi: &[f64], p: &RateParams, lat: &Lattice, t: f64, dt: f64) -> Result<f64> {
    let sp = SuperRWParams::subdual(p, lat)?;
    let psi: Vec<f64> = x.counts().iter().map(|&n| n as f64).collect();
    super_laplace_functional(phi, &psi, &sp, t, dt)
}

/// Closed form of `u' = βu - γu²` from `u_0`.
pub fn logistic(u0: f64, growth: f64, activity: f64, t: f64) -> f64 {
    if growth == 0.0 {
        u0 / (1.0 + activity * u0 * t)
    } else {
        let e = libm::exp(growth * t);
        growth * u0 * e / (growth + activity * u0 * libm::expm1(growth * t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lone(growth: f64, activity: f64) -> SuperRWParams {
        SuperRWParams::new(growth, activity, Lattice::custom(1, &[]).unwrap()).unwrap()
    }

    #[test]
    fn zero_stays_zero() {
        let p = SuperRWParams::new(1.0, 1.0, Lattice::torus_1d(3).unwrap()).unwrap();
        let sol = loglaplace_solve(&[0.0; 3], &p, &[0.5, 1.0], 1e-2).unwrap();
        assert!(sol.values.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(super_laplace_functional(&[1.0; 3], &[0.0; 3], &p, 1.0, 1e-2).unwrap(), 1.0);
        assert_eq!(super_laplace_functional(&[0.0; 3], &[2.0; 3], &p, 1.0, 1e-2).unwrap(), 1.0);
    }

    #[test]
    fn matches_logistic() {
        for &(b, g, u0) in &[(1.5, 2.0, 3.0), (-0.7, 1.0, 0.4), (0.0, 2.0, 1.0)] {
            let sol = loglaplace_solve(&[u0], &lone(b, g), &[0.3, 1.0, 2.0], 1e-3).unwrap();
            for (t, u) in sol.times.iter().zip(&sol.values) {
                assert!((u[0] - logistic(u0, b, g, *t)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn fourth_order() {
        let (b, g, u0, t) = (2.0, 3.0, 5.0, 1.0);
        let exact = logistic(u0, b, g, t);
        let err: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| (loglaplace_solve(&[u0], &lone(b, g), &[t], dt).unwrap().last()[0] - exact).abs())
            .collect();
        for w in err.windows(2) {
            let ratio = w[0] / w[1];
            assert!((4.0..=64.0).contains(&ratio), "ratio {ratio}, errors {err:?}");
        }
    }

    #[test]
    fn pure_motion_conserves_mass() {
        let p = SuperRWParams::new(0.0, 0.0, Lattice::torus_2d(3, 3).unwrap()).unwrap();
        let psi: Vec<f64> = (0..9).map(|i| i as f64 * 0.3).collect();
        let sol = loglaplace_solve(&psi, &p, &[0.5, 3.0], 1e-2).unwrap();
        let mass: f64 = psi.iter().sum();
        for u in &sol.values {
            assert!((u.iter().sum::<f64>() - mass).abs() < 1e-10);
        }
    }

    #[test]
    fn subdual_parameters() {
        let lat = Lattice::torus_1d(3).unwrap();
        let p = RateParams::new(0.0, 1.2, 0.5, 0.3).unwrap();
        let sp = SuperRWParams::subdual(&p, &lat).unwrap();
        assert!((sp.growth - (1.2 - 0.3 + 0.5)).abs() < 1e-15);
        assert_eq!(sp.activity, 0.5);
        let p = RateParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let sp = SuperRWParams::subdual(&p, &lat).unwrap();
        assert_eq!((sp.growth, sp.activity), (3.0, 3.0));
    }

    #[test]
    fn empty_configuration_gives_one() {
        let lat = Lattice::torus_1d(3).unwrap();
        let p = RateParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let v = subduality_rhs(&OccupancyState::zeros(3), &[0.3; 3], &p, &lat, 0.5, 1e-3).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        let p = lone(1.0, 1.0);
        assert!(loglaplace_solve(&[-1.0], &p, &[1.0], 1e-3).is_err());
        assert!(loglaplace_solve(&[1.0], &p, &[1.0], 0.0).is_err());
        assert!(SuperRWParams::new(1.0, -1.0, Lattice::custom(1, &[]).unwrap()).is_err());
    }

    #[test]
    fn transposed_motion() {
        // One-way motion 0 → 1: mass flows from site 0 to site 1 only under
        // the transposed kernel used by the subdual.
        let lat = Lattice::custom(2, &[(0, 1, 1.0)]).unwrap();
        let direct = SuperRWParams::new(0.0, 0.0, lat.clone()).unwrap();
        let u = loglaplace_solve(&[0.0, 1.0], &direct, &[1.0], 1e-3).unwrap();
        // u'(1) = a(0,1)(u(0) - u(1)) with a(0,1) = 1.
        assert!((u.last()[1] - libm::exp(-1.0)).abs() < 1e-10);
        assert!((u.last()[0]).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn monotone_in_initial_data(
            base in prop::collection::vec(0.0f64..3.0, 4),
            extra in prop::collection::vec(0.0f64..2.0, 4),
            growth in -2.0f64..2.0, activity in 0.0f64..2.0,
        ) {
            let p = SuperRWParams::new(growth, activity, Lattice::torus_1d(4).unwrap()).unwrap();
            let bigger: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + b).collect();
            let lo = loglaplace_solve(&base, &p, &[0.7], 1e-2).unwrap();
            let hi = loglaplace_solve(&bigger, &p, &[0.7], 1e-2).unwrap();
            for (a, b) in lo.last().iter().zip(hi.last()) {
                prop_assert!(*a <= *b + 1e-12);
                prop_assert!(*a >= 0.0);
            }
        }
    }
}
