//! Transient solutions of finite continuous-time Markov chains by
//! uniformization.
//!
//! With `Λ ≥ max_s exit(s)` and `P = I + Q/Λ`, the transition matrix is
//! `e^{Qt} = Σ_k Pois(k; Λt) P^k`. The series is truncated once the
//! accumulated Poisson weight exceeds `1 - tol`. Long horizons are split into
//! chunks with `Λτ ≤ MAX_CHUNK_INTENSITY` so the leading weight `e^{-Λτ}`
//! stays representable.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default truncation tolerance for the Poisson tail.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

const MAX_CHUNK_INTENSITY: f64 = 200.0;

/// Sparse generator in compressed-row form. Off-diagonal rates are stored
/// explicitly; the diagonal is `-exit(s)`, where `exit(s)` may exceed the
/// stored row sum by a leak rate (substochastic chains).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGenerator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    rates: Vec<f64>,
    exit: Vec<f64>,
}

impl SparseGenerator {
    /// Builds a conservative generator from per-row lists of `(target, rate)`.
    /// Diagonal and zero-rate entries are dropped.
    pub fn from_rows(rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut rates = Vec::new();
        let mut exit = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for (s, row) in rows.iter().enumerate() {
            let mut total = 0.0;
            for &(t, r) in row {
                if t != s && r > 0.0 {
                    cols.push(t);
                    rates.push(r);
                    total += r;
                }
            }
            exit.push(total);
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            rates,
            exit,
        }
    }

    /// Adds a per-state leak (killing) rate, making the chain substochastic.
    pub fn with_leak(mut self, leak: &[f64]) -> Self {
        assert_eq!(leak.len(), self.exit.len());
        for (e, l) in self.exit.iter_mut().zip(leak) {
            *e += l;
        }
        self
    }

    pub fn states(&self) -> usize {
        self.exit.len()
    }

    pub fn exit_rate(&self, s: usize) -> f64 {
        self.exit[s]
    }

    pub fn transitions(&self, s: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[s]..self.row_ptr[s + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.rates[range].iter().copied())
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.exit.iter().copied().fold(0.0, f64::max)
    }

    /// `(Gf)(s) = Σ_t q(s,t) f(t) - exit(s) f(s)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.states())
            .map(|s| {
                self.transitions(s).map(|(t, r)| r * f[t]).sum::<f64>() - self.exit[s] * f[s]
            })
            .collect()
    }

    /// `out = v P` with `P = I + Q/Λ`.
    fn row_step(&self, v: &[f64], out: &mut [f64], lambda: f64) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = v[s] * (1.0 - self.exit[s] / lambda);
        }
        for (s, &mass) in v.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (t, r) in self.transitions(s) {
                out[t] += mass * r / lambda;
            }
        }
    }

    /// `out = P f` with `P = I + Q/Λ`.
    fn col_step(&self, f: &[f64], out: &mut [f64], lambda: f64) {
        for (s, o) in out.iter_mut().enumerate() {
            let jump: f64 = self.transitions(s).map(|(t, r)| r * f[t]).sum();
            *o = f[s] * (1.0 - self.exit[s] / lambda) + jump / lambda;
        }
    }

    /// Row vector times the transition matrix: `μ e^{Qt}`.
    pub fn propagate_distribution(&self, mu: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        self.propagate(mu, t, tol, Self::row_step)
    }

    /// Transition matrix times a column vector: `e^{Qt} f`.
    pub fn propagate_function(&self, f: &[f64], t: f64, tol: f64) -> Result<Vec<f64>> {
        self.propagate(f, t, tol, Self::col_step)
    }

    fn propagate(
        &self,
        v0: &[f64],
        t: f64,
        tol: f64,
        step: fn(&Self, &[f64], &mut [f64], f64),
    ) -> Result<Vec<f64>> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        assert_eq!(v0.len(), self.states(), "vector length mismatch");
        let lambda = self.max_exit_rate();
        if t == 0.0 || lambda == 0.0 {
            return Ok(v0.to_vec());
        }
        let chunks = libm::ceil(lambda * t / MAX_CHUNK_INTENSITY).max(1.0) as usize;
        let tau = t / chunks as f64;
        // Spread the tail budget over chunks.
        let chunk_tol = tol / chunks as f64;
        let mut current = v0.to_vec();
        let mut term = vec![0.0; v0.len()];
        let mut next = vec![0.0; v0.len()];
        for _ in 0..chunks {
            let intensity = lambda * tau;
            let mut weight = libm::exp(-intensity);
            let mut cumulative = weight;
            term.copy_from_slice(&current);
            let mut acc: Vec<f64> = term.iter().map(|v| weight * v).collect();
            let mut k = 0u64;
            while 1.0 - cumulative > chunk_tol {
                k += 1;
                step(self, &term, &mut next, lambda);
                core::mem::swap(&mut term, &mut next);
                weight *= intensity / k as f64;
                cumulative += weight;
                for (a, v) in acc.iter_mut().zip(&term) {
                    *a += weight * v;
                }
                // Rounding can leave the cumulative weight a hair below 1; once
                // the remaining weights are negligible we are done.
                if k as f64 > intensity && weight < chunk_tol * 1e-3 {
                    break;
                }
            }
            current = acc;
        }
        Ok(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_state(rate_up: f64, rate_down: f64) -> SparseGenerator {
        SparseGenerator::from_rows(&[vec![(1, rate_up)], vec![(0, rate_down)]])
    }

    #[test]
    fn two_state_closed_form() {
        let g = two_state(1.0, 3.0);
        for &t in &[0.0, 0.1, 1.0, 7.5, 400.0] {
            let p = g.propagate_distribution(&[1.0, 0.0], t, DEFAULT_TOLERANCE).unwrap();
            let exact = 0.75 + 0.25 * libm::exp(-4.0 * t);
            assert!((p[0] - exact).abs() < 1e-11, "t={t}: {} vs {exact}", p[0]);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn row_and_column_propagation_agree() {
        let g = SparseGenerator::from_rows(&[
            vec![(1, 2.0), (2, 0.5)],
            vec![(2, 1.0)],
            vec![(0, 0.3), (1, 0.2)],
        ]);
        let mu = [0.2, 0.5, 0.3];
        let f = [1.0, -2.0, 4.0];
        let t = 1.3;
        let lhs: f64 = g
            .propagate_distribution(&mu, t, 1e-13)
            .unwrap()
            .iter()
            .zip(&f)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = g
            .propagate_function(&f, t, 1e-13)
            .unwrap()
            .iter()
            .zip(&mu)
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-11);
    }

    #[test]
    fn leak_makes_chain_substochastic() {
        let g = SparseGenerator::from_rows(&[vec![], vec![]]).with_leak(&[2.0, 0.0]);
        let p = g.propagate_distribution(&[1.0, 0.0], 0.5, 1e-13).unwrap();
        assert!((p[0] - libm::exp(-1.0)).abs() < 1e-12);
        assert!(g.propagate_distribution(&[1.0, 0.0], -1.0, 1e-12).is_err());
    }
}
