//! Exact reference computations on truncated state spaces: transient laws of
//! the particle system with an occupancy cap, the carré du champ, the
//! covariance formula, and the covariance kernels of the random-walk
//! semigroup.
//!
//! Truncation removes every transition that would push a site above the
//! cap. The truncated chain is a conservative Markov chain on `{0..cap}^Λ`;
//! the probability that the untruncated process would have attempted a
//! removed transition is computed separately on a killed chain and reported
//! as the truncation budget of every comparison.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::branco::{check_len, simulate, OccupancyState, RateParams};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::matrix::DenseMatrix;
use crate::quadrature::{simpson, simpson_weights};
use crate::stats::EnsembleStats;
use crate::uniformization::{SparseGenerator, DEFAULT_TOLERANCE};

/// Largest state space the oracle will enumerate.
pub const MAX_STATES: usize = 1_000_000;

/// Truncation budget above which covariance checks refuse to run.
pub const SUPPRESSION_BUDGET: f64 = 1e-6;

/// Change in the kernel tables below which panel doubling stops.
pub const KERNEL_CONVERGENCE: f64 = 1e-8;

/// Transition of the particle generator: target state and rate.
fn transitions_of(x: &[u64], p: &RateParams, lat: &Lattice, mut emit: impl FnMut(Vec<u64>, f64)) {
    let shifted = |deltas: &[(usize, i64)]| {
        let mut y = x.to_vec();
        for &(i, d) in deltas {
            y[i] = (y[i] as i64 + d) as u64;
        }
        y
    };
    for (i, j, q) in lat.edges() {
        if x[i] > 0 {
            emit(shifted(&[(i, -1), (j, 1)]), q * x[i] as f64);
        }
    }
    for (i, &n) in x.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let nf = n as f64;
        let pairs = nf * (nf - 1.0);
        if pairs > 0.0 {
            emit(shifted(&[(i, -2)]), p.annihilation * pairs);
            emit(shifted(&[(i, -1)]), p.coalescence * pairs);
        }
        emit(shifted(&[(i, 1)]), p.branching * nf);
        emit(shifted(&[(i, -1)]), p.death * nf);
    }
}

/// The particle generator restricted to `{0..cap}^Λ`.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    lattice: Lattice,
    params: RateParams,
    cap: u64,
    states: usize,
    generator: SparseGenerator,
    /// Total rate of removed transitions out of each state.
    suppressed: Vec<f64>,
}

/// Law at time `t` together with the truncation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientLaw {
    pub distribution: Vec<f64>,
    /// Probability that the untruncated process attempts to exceed the cap
    /// before `t`. Bounds the total-variation error of `distribution`.
    pub suppressed_mass: f64,
}

impl TruncatedChain {
    pub fn new(lat: &Lattice, p: &RateParams, cap: u64) -> Result<Self> {
        p.validate()?;
        let radix = cap as u128 + 1;
        let states = radix.checked_pow(lat.len() as u32).unwrap_or(u128::MAX);
        if states > MAX_STATES as u128 {
            return Err(Error::StateSpaceOverflow {
                states,
                limit: MAX_STATES,
            });
        }
        let states = states as usize;
        let mut chain = Self {
            lattice: lat.clone(),
            params: *p,
            cap,
            states,
            generator: SparseGenerator::from_rows(&[]),
            suppressed: vec![0.0; states],
        };
        let mut rows = Vec::with_capacity(states);
        for s in 0..states {
            let x = chain.decode(s);
            let mut row = Vec::new();
            let mut lost = 0.0;
            transitions_of(&x, p, lat, |y, rate| {
                if rate <= 0.0 {
                    return;
                }
                if y.iter().any(|&v| v > cap) {
                    lost += rate;
                } else {
                    row.push((chain.encode(&y), rate));
                }
            });
            chain.suppressed[s] = lost;
            rows.push(row);
        }
        chain.generator = SparseGenerator::from_rows(&rows);
        Ok(chain)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn params(&self) -> &RateParams {
        &self.params
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn generator(&self) -> &SparseGenerator {
        &self.generator
    }

    /// Total rate of removed transitions out of state `s`.
    pub fn suppressed_rate(&self, s: usize) -> f64 {
        self.suppressed[s]
    }

    /// Mixed-radix index with site 0 as the most significant digit.
    pub fn encode(&self, x: &[u64]) -> usize {
        x.iter().fold(0usize, |acc, &v| acc * (self.cap as usize + 1) + v as usize)
    }

    pub fn index_of(&self, x: &OccupancyState) -> Result<usize> {
        check_len(&self.lattice, x.len())?;
        if let Some(site) = x.counts().iter().position(|&v| v > self.cap) {
            return Err(Error::Explosion {
                site,
                count: x.get(site),
                cap: self.cap,
            });
        }
        Ok(self.encode(x.counts()))
    }

    pub fn decode(&self, mut s: usize) -> Vec<u64> {
        let radix = self.cap as usize + 1;
        let mut x = vec![0; self.lattice.len()];
        for v in x.iter_mut().rev() {
            *v = (s % radix) as u64;
            s /= radix;
        }
        x
    }

    pub fn state(&self, s: usize) -> OccupancyState {
        OccupancyState::new(self.decode(s))
    }

    /// Point mass at `x`.
    pub fn point_mass(&self, x: &OccupancyState) -> Result<Vec<f64>> {
        let mut mu = vec![0.0; self.states];
        mu[self.index_of(x)?] = 1.0;
        Ok(mu)
    }

    /// Evaluates a state function on every enumerated state.
    pub fn tabulate(&self, f: impl Fn(&OccupancyState) -> f64) -> Vec<f64> {
        (0..self.states).map(|s| f(&self.state(s))).collect()
    }

    fn check_mu(&self, mu0: &[f64]) -> Result<()> {
        if mu0.len() != self.states {
            Err(Error::DimensionMismatch {
                expected: self.states,
                got: mu0.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Probability of attempting a removed transition before `t`.
    pub fn suppressed_mass(&self, mu0: &[f64], t: f64) -> Result<f64> {
        self.check_mu(mu0)?;
        if self.suppressed.iter().all(|&r| r == 0.0) {
            return Ok(0.0);
        }
        let killed = self.generator.clone().with_leak(&self.suppressed);
        let survived: f64 = killed.propagate_distribution(mu0, t, DEFAULT_TOLERANCE)?.iter().sum();
        let start: f64 = mu0.iter().sum();
        Ok((start - survived).max(0.0))
    }

    pub fn transient_distribution(&self, mu0: &[f64], t: f64) -> Result<TransientLaw> {
        self.check_mu(mu0)?;
        let distribution = self.generator.propagate_distribution(mu0, t, DEFAULT_TOLERANCE)?;
        Ok(TransientLaw {
            distribution,
            suppressed_mass: self.suppressed_mass(mu0, t)?,
        })
    }

    /// `E^x[f(X_t)]` for every starting state.
    pub fn expectation(&self, f: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_mu(f)?;
        self.generator.propagate_function(f, t, DEFAULT_TOLERANCE)
    }

    /// `Γ(f,g)` from the five-mechanism sum of products of increments.
    pub fn carre_du_champ(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        (0..self.states)
            .map(|s| {
                let gamma2: f64 = self
                    .generator
                    .transitions(s)
                    .map(|(y, r)| r * (f[y] - f[s]) * (g[y] - g[s]))
                    .sum();
                0.5 * gamma2
            })
            .collect()
    }

    /// `Γ(f,g) = ½(G(fg) - (Gf)g - f(Gg))` from the generator matrix.
    pub fn carre_du_champ_matrix(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let fg: Vec<f64> = f.iter().zip(g).map(|(a, b)| a * b).collect();
        let gfg = self.generator.apply(&fg);
        let gf = self.generator.apply(f);
        let gg = self.generator.apply(g);
        (0..self.states)
            .map(|s| 0.5 * (gfg[s] - gf[s] * g[s] - f[s] * gg[s]))
            .collect()
    }

    /// Evaluates both sides of
    /// `Cov_{μS_t}(f,g) = Cov_μ(S_t f, S_t g) + 2∫_0^t μS_{t-s} Γ(S_s f, S_s g) ds`,
    /// with the time integral on `n_quad` Simpson panels.
    pub fn covariance_formula_check(
        &self,
        f: &[f64],
        g: &[f64],
        mu0: &[f64],
        t: f64,
        n_quad: usize,
    ) -> Result<CovarianceCheck> {
        self.check_mu(mu0)?;
        self.check_mu(f)?;
        self.check_mu(g)?;
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let suppressed_mass = self.suppressed_mass(mu0, t)?;
        if suppressed_mass > SUPPRESSION_BUDGET {
            return Err(Error::TruncationTooLarge {
                mass: suppressed_mass,
                allowed: SUPPRESSION_BUDGET,
            });
        }
        let n = n_quad.max(1);
        let h = t / n as f64;
        let tol = DEFAULT_TOLERANCE;
        // laws[k] = μ S_{k h}, fs[k] = S_{k h} f.
        let mut laws = Vec::with_capacity(n + 1);
        let mut fs = Vec::with_capacity(n + 1);
        let mut gs = Vec::with_capacity(n + 1);
        laws.push(mu0.to_vec());
        fs.push(f.to_vec());
        gs.push(g.to_vec());
        for k in 1..=n {
            laws.push(self.generator.propagate_distribution(&laws[k - 1], h, tol)?);
            fs.push(self.generator.propagate_function(&fs[k - 1], h, tol)?);
            gs.push(self.generator.propagate_function(&gs[k - 1], h, tol)?);
        }
        let lhs = covariance(&laws[n], f, g);
        let integrand: Vec<f64> = (0..=n)
            .map(|k| {
                let gamma = self.carre_du_champ(&fs[k], &gs[k]);
                dot(&laws[n - k], &gamma)
            })
            .collect();
        let rhs = covariance(mu0, &fs[n], &gs[n]) + 2.0 * simpson(&integrand, h);
        Ok(CovarianceCheck {
            lhs,
            rhs,
            deviation: (lhs - rhs).abs(),
            suppressed_mass,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Cov_μ(f,g)` for a (possibly sub-)probability vector `μ`.
pub fn covariance(mu: &[f64], f: &[f64], g: &[f64]) -> f64 {
    let total: f64 = mu.iter().sum();
    let mf = dot(mu, f) / total;
    let mg = dot(mu, g) / total;
    mu.iter().zip(f.iter().zip(g)).map(|(w, (a, b))| w * (a - mf) * (b - mg)).sum::<f64>() / total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub deviation: f64,
    pub suppressed_mass: f64,
}

/// `Γ(f,g)(x)` for arbitrary state functions on the untruncated space.
pub fn carre_du_champ(
    f: impl Fn(&OccupancyState) -> f64,
    g: impl Fn(&OccupancyState) -> f64,
    x: &OccupancyState,
    p: &RateParams,
    lat: &Lattice,
) -> Result<f64> {
    check_len(lat, x.len())?;
    let (fx, gx) = (f(x), g(x));
    let mut acc = 0.0;
    transitions_of(x.counts(), p, lat, |y, rate| {
        if rate > 0.0 {
            let y = OccupancyState::new(y);
            acc += rate * (f(&y) - fx) * (g(&y) - gx);
        }
    });
    Ok(0.5 * acc)
}

/// Covariance kernels at a fixed time `t` on an `n`-site lattice, with
/// `P̃_s = e^{(b-d)s} P_s`:
///
/// - `A_t(i;k,l) = Σ_j q(i,j)(P̃_t(i,k)+P̃_t(j,k))(P̃_t(i,l)+P̃_t(j,l))`
/// - `B_t(i;k,l) = P̃_t(i,k) P̃_t(i,l)`
/// - `C_t = A_t + (b+d) B_t`
/// - `K_t(i;k,l) = ∫_0^t Σ_j P̃_{t-s}(i,j) C_s(j;k,l) ds
///   + (2a+c) ∫_0^t ds Σ_{j,m} ∫_0^{t-s} du P̃_{t-s-u}(i,j) C_u(j;m,m) P̃_s(m,k) P̃_s(m,l)`
/// - `L_t(i,j;k,l) = (2a+c) ∫_0^t Σ_m P̃_{t-s}(i,m) P̃_{t-s}(j,m) P̃_s(m,k) P̃_s(m,l) ds`
///
/// The inner walk in the second part of `K` runs for the remaining time
/// `t-s-u`: it transports the mean of the dominating branching process from
/// time 0 to the time at which its variance is produced.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTables {
    pub t: f64,
    pub sites: usize,
    pub n_quad: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    k: Vec<f64>,
    l: Vec<f64>,
}

impl KernelTables {
    fn idx3(&self, i: usize, k: usize, l: usize) -> usize {
        (i * self.sites + k) * self.sites + l
    }

    fn idx4(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        ((i * self.sites + j) * self.sites + k) * self.sites + l
    }

    pub fn a(&self, i: usize, k: usize, l: usize) -> f64 {
        self.a[self.idx3(i, k, l)]
    }

    pub fn b(&self, i: usize, k: usize, l: usize) -> f64 {
        self.b[self.idx3(i, k, l)]
    }

    pub fn c(&self, i: usize, k: usize, l: usize) -> f64 {
        self.c[self.idx3(i, k, l)]
    }

    pub fn k(&self, i: usize, k: usize, l: usize) -> f64 {
        self.k[self.idx3(i, k, l)]
    }

    pub fn l(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.l[self.idx4(i, j, k, l)]
    }

    /// `max_l Σ_{i,k} K_t(i;k,l)`.
    pub fn k_sum(&self) -> f64 {
        let n = self.sites;
        (0..n)
            .map(|l| (0..n).flat_map(|i| (0..n).map(move |k| (i, k))).map(|(i, k)| self.k(i, k, l)).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max_l Σ_{i,j,k} L_t(i,j;k,l)`.
    pub fn l_sum(&self) -> f64 {
        let n = self.sites;
        (0..n)
            .map(|l| {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            acc += self.l(i, j, k, l);
                        }
                    }
                }
                acc
            })
            .fold(0.0, f64::max)
    }

    fn max_abs_diff(&self, other: &KernelTables) -> f64 {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        diff(&self.k, &other.k).max(diff(&self.l, &other.l))
    }

    /// `½ Σ_{i, k≠l} x(i) K_t(i;k,l) μ(k) μ(l) + ½ Σ_{i,j, k≠l} x(i) x(j) L_t(i,j;k,l) μ(k) μ(l)`.
    pub fn exponential_bound(&self, x: &OccupancyState, mu: &[f64]) -> f64 {
        let n = self.sites;
        let xf: Vec<f64> = x.counts().iter().map(|&v| v as f64).collect();
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                if k == l {
                    continue;
                }
                let weight = mu[k] * mu[l];
                if weight == 0.0 {
                    continue;
                }
                for i in 0..n {
                    if xf[i] == 0.0 {
                        continue;
                    }
                    acc += xf[i] * self.k(i, k, l) * weight;
                    for j in 0..n {
                        acc += xf[i] * xf[j] * self.l(i, j, k, l) * weight;
                    }
                }
            }
        }
        0.5 * acc
    }
}

/// `e^{(b-d)kh} P_{kh}` for `k = 0..=n`.
fn damped_semigroup(lat: &Lattice, p: &RateParams, h: f64, n: usize) -> Result<Vec<DenseMatrix>> {
    let step = lat.transition_semigroup(h)?;
    let growth = libm::exp((p.branching - p.death) * h);
    let mut out = Vec::with_capacity(n + 1);
    out.push(DenseMatrix::identity(lat.len()));
    for k in 1..=n {
        let mut next = out[k - 1].mul(&step);
        next.scale(growth);
        out.push(next);
    }
    Ok(out)
}

/// `A_s`, `B_s` and `C_s` as flat `(i,k,l)` tables.
fn abc(lat: &Lattice, p: &RateParams, pt: &DenseMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = lat.len();
    let mut a = vec![0.0; n * n * n];
    let mut b = vec![0.0; n * n * n];
    for i in 0..n {
        for k in 0..n {
            for l in 0..n {
                let at = (i * n + k) * n + l;
                b[at] = pt[(i, k)] * pt[(i, l)];
                a[at] = lat
                    .out_edges(i)
                    .iter()
                    .map(|&(j, q)| q * (pt[(i, k)] + pt[(j, k)]) * (pt[(i, l)] + pt[(j, l)]))
                    .sum();
            }
        }
    }
    let c = a.iter().zip(&b).map(|(x, y)| x + (p.branching + p.death) * y).collect();
    (a, b, c)
}

/// Kernel tables with all time integrals on `n_quad` Simpson panels.
pub fn covariance_kernels(lat: &Lattice, p: &RateParams, t: f64, n_quad: usize) -> Result<KernelTables> {
    p.validate()?;
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let n = lat.len();
    let panels = n_quad.max(1);
    let h = t / panels as f64;
    let pt = damped_semigroup(lat, p, h, panels)?;
    let removal = 2.0 * p.annihilation + p.coalescence;
    let cs: Vec<Vec<f64>> = pt.iter().map(|m| abc(lat, p, m).2).collect();
    // diag_c[k](j,m) = C_{kh}(j;m,m).
    let diag_c: Vec<DenseMatrix> = cs
        .iter()
        .map(|c| {
            let mut d = DenseMatrix::zeros(n, n);
            for j in 0..n {
                for m in 0..n {
                    d[(j, m)] = c[(j * n + m) * n + m];
                }
            }
            d
        })
        .collect();
    // inner[r](i,m) = ∫_0^{rh} Σ_j P̃_{rh-u}(i,j) C_u(j;m,m) du.
    let inner: Vec<DenseMatrix> = (0..=panels)
        .map(|r| {
            let w = simpson_weights(r, h);
            let mut acc = DenseMatrix::zeros(n, n);
            for (u, wu) in w.iter().enumerate() {
                let term = pt[r - u].mul(&diag_c[u]);
                for (a, b) in acc.as_mut_slice().iter_mut().zip(term.as_slice()) {
                    *a += wu * b;
                }
            }
            acc
        })
        .collect();
    let weights = simpson_weights(panels, h);
    let mut k_tab = vec![0.0; n * n * n];
    let mut l_tab = vec![0.0; n * n * n * n];
    for (s, &w) in weights.iter().enumerate() {
        let far = &pt[panels - s];
        let near = &pt[s];
        let c = &cs[s];
        let v = &inner[panels - s];
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut first = 0.0;
                    let mut second = 0.0;
                    for j in 0..n {
                        first += far[(i, j)] * c[(j * n + k) * n + l];
                        second += v[(i, j)] * near[(j, k)] * near[(j, l)];
                    }
                    k_tab[(i * n + k) * n + l] += w * (first + removal * second);
                }
            }
        }
        for m in 0..n {
            for i in 0..n {
                let fi = far[(i, m)];
                if fi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let fij = fi * far[(j, m)];
                    if fij == 0.0 {
                        continue;
                    }
                    for k in 0..n {
                        let base = ((i * n + j) * n + k) * n;
                        let nk = near[(m, k)];
                        for l in 0..n {
                            l_tab[base + l] += w * removal * fij * nk * near[(m, l)];
                        }
                    }
                }
            }
        }
    }
    let (a, b, c) = abc(lat, p, &pt[panels]);
    Ok(KernelTables {
        t,
        sites: n,
        n_quad: panels,
        a,
        b,
        c,
        k: k_tab,
        l: l_tab,
    })
}

/// Doubles the panel count from `n_start` until the tables move by less than
/// [`KERNEL_CONVERGENCE`] or `n_max` is reached.
pub fn covariance_kernels_converged(
    lat: &Lattice,
    p: &RateParams,
    t: f64,
    n_start: usize,
    n_max: usize,
) -> Result<KernelTables> {
    let mut n = n_start.max(2);
    let mut prev = covariance_kernels(lat, p, t, n)?;
    while n * 2 <= n_max {
        n *= 2;
        let next = covariance_kernels(lat, p, t, n)?;
        let change = next.max_abs_diff(&prev);
        prev = next;
        if change < KERNEL_CONVERGENCE {
            break;
        }
    }
    Ok(prev)
}

/// `(e^x - 1)/x`.
fn expm1_ratio(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 + x / 2.0
    } else {
        libm::expm1(x) / x
    }
}

/// `(e^x - 1 - x)/x²`.
fn expm1_ratio2(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        0.5 + x / 6.0 + x * x / 24.0 + x * x * x / 120.0
    } else {
        (libm::expm1(x) - x) / (x * x)
    }
}

/// Closed-form bounds on `Σ_{i,k} K_t(i;k,l)` and `Σ_{i,j,k} L_t(i,j;k,l)`
/// for a kernel whose rows and columns all sum to `jump_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSumBounds {
    pub k_first: f64,
    pub k_second: f64,
    pub l: f64,
}

impl KernelSumBounds {
    pub fn k(&self) -> f64 {
        self.k_first + self.k_second
    }
}

pub fn kernel_sum_bounds(jump_rate: f64, p: &RateParams, t: f64) -> KernelSumBounds {
    let lambda = p.branching - p.death;
    let x = lambda * t;
    let c_mass = 4.0 * jump_rate + p.branching + p.death;
    let removal = 2.0 * p.annihilation + p.coalescence;
    // ∫_0^t e^{λ(t-s)} e^{2λs} ds = t e^{λt} (e^{λt}-1)/(λt).
    let k_first = c_mass * t * libm::exp(x) * expm1_ratio(x);
    // ∫_0^t ds ∫_0^{t-s} du e^{λ(t-s-u)} e^{2λu} e^{2λs} = t² e^{2λt} (e^{-λt}-1+λt)/(λt)².
    let k_second = removal * c_mass * t * t * libm::exp(2.0 * x) * expm1_ratio2(-x);
    // ∫_0^t e^{2λ(t-s)} e^{2λs} ds = t e^{2λt}.
    let l = removal * t * libm::exp(2.0 * x);
    KernelSumBounds { k_first, k_second, l }
}

/// Left and right sides of the bound on
/// `E^x[e^{-Σ μ(i) X_t(i)}] - Π_i E^x[e^{-μ(i) X_t(i)}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialBoundCheck {
    pub lhs: f64,
    /// Standard error of `lhs`; zero for the exact oracle.
    pub standard_error: f64,
    pub bound: f64,
    /// Truncation budget of the oracle; zero for Monte Carlo.
    pub suppressed_mass: f64,
}

impl ExponentialBoundCheck {
    /// `|lhs| ≤ bound + 3·SE + truncation budget`.
    pub fn holds(&self) -> bool {
        self.lhs.abs() <= self.bound + 3.0 * self.standard_error + self.suppressed_mass
    }
}

fn check_mu_weights(mu: &[f64]) -> Result<()> {
    if let Some(site) = mu.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        Err(Error::NegativeIntensity {
            site,
            value: mu[site],
        })
    } else {
        Ok(())
    }
}

/// Exact left side from a truncated chain.
pub fn exponential_covariance_bound_check(
    x: &OccupancyState,
    mu: &[f64],
    chain: &TruncatedChain,
    tables: &KernelTables,
) -> Result<ExponentialBoundCheck> {
    check_mu_weights(mu)?;
    check_len(chain.lattice(), mu.len())?;
    let law = chain.transient_distribution(&chain.point_mass(x)?, tables.t)?;
    let n = chain.lattice().len();
    let mut joint = 0.0;
    let mut marginals = vec![0.0; n];
    for (s, &w) in law.distribution.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let y = chain.decode(s);
        let mut exponent = 0.0;
        for i in 0..n {
            let e = mu[i] * y[i] as f64;
            exponent += e;
            marginals[i] += w * libm::exp(-e);
        }
        joint += w * libm::exp(-exponent);
    }
    // Renormalize away the uniformization tail. Sites with μ(i) = 0
    // contribute the factor E[1] = 1 exactly.
    let total: f64 = law.distribution.iter().sum();
    let product: f64 = marginals.iter().zip(mu).filter(|(_, &m)| m > 0.0).map(|(v, _)| v / total).product();
    Ok(ExponentialBoundCheck {
        lhs: joint / total - product,
        standard_error: 0.0,
        bound: tables.exponential_bound(x, mu),
        suppressed_mass: law.suppressed_mass,
    })
}

/// Monte Carlo left side; the standard error linearizes the product of
/// marginal means around their estimates.
pub fn exponential_covariance_bound_mc<R: Rng + ?Sized>(
    x: &OccupancyState,
    mu: &[f64],
    p: &RateParams,
    lat: &Lattice,
    tables: &KernelTables,
    replicates: u64,
    rng: &mut R,
) -> Result<ExponentialBoundCheck> {
    check_mu_weights(mu)?;
    check_len(lat, mu.len())?;
    let n = lat.len();
    let mut samples = Vec::with_capacity(replicates as usize);
    for _ in 0..replicates {
        let y = simulate(x, p, lat, &[tables.t], rng)?.pop().expect("one grid time");
        let factors: Vec<f64> = (0..n).map(|i| libm::exp(-mu[i] * y.get(i) as f64)).collect();
        samples.push(factors);
    }
    let means: Vec<f64> = (0..n)
        .map(|i| samples.iter().map(|f| f[i]).sum::<f64>() / replicates as f64)
        .collect();
    let product: f64 = means.iter().product();
    let gradient: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| means[j]).product())
        .collect();
    let mut joint = EnsembleStats::new();
    let mut linear = EnsembleStats::new();
    for f in &samples {
        let prod: f64 = f.iter().product();
        joint.push(prod);
        linear.push(prod - dot(&gradient, f));
    }
    Ok(ExponentialBoundCheck {
        lhs: joint.mean() - product,
        standard_error: linear.standard_error(),
        bound: tables.exponential_bound(x, mu),
        suppressed_mass: 0.0,
    })
}
