//! Finite site sets with a jump kernel `q(i,j)`.
//!
//! A [`Lattice`] stores the kernel in both directions (outgoing and incoming
//! adjacency), so forward dynamics use `q(i,j)` and dual dynamics can use
//! `q†(i,j) = q(j,i)` without copying. [`Lattice::transposed`] builds the
//! lattice for `q†` explicitly.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::uniformization::{SparseGenerator, DEFAULT_TOLERANCE};

/// Tolerance on `Σ_j q(j,i) - Σ_j q(i,j)` for counting-measure invariance.
pub const FLOW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Ring of `n` sites, nearest neighbors at rate 1.
    Torus1d(usize),
    /// `rows × cols` periodic grid, nearest neighbors at rate 1.
    Torus2d(usize, usize),
    /// Complete graph on `n` sites, rate `1/(n-1)` per directed pair.
    Complete(usize),
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    shape: Shape,
    sites: usize,
    /// `out[i] = [(j, q(i,j))]`, sorted by `j`.
    out: Vec<Vec<(usize, f64)>>,
    /// `inc[i] = [(j, q(j,i))]`, sorted by `j`.
    inc: Vec<Vec<(usize, f64)>>,
}

/// Result of checking the standing assumptions on `(Λ, q)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    /// `max_i Σ_j q(i,j)`.
    pub max_exit_rate: f64,
    /// Connectivity of the symmetrized support graph.
    pub irreducible: bool,
    /// `Σ_j q(j,i) = Σ_j q(i,j)` for every site, within [`FLOW_TOLERANCE`].
    pub counting_measure_invariant: bool,
    /// `max_i |Σ_j q(j,i) - Σ_j q(i,j)|`.
    pub max_flow_imbalance: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.irreducible && self.counting_measure_invariant
    }
}

impl Lattice {
    pub fn torus_1d(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyLattice);
        }
        let mut rates = BTreeMap::new();
        for i in 0..n {
            for j in [(i + 1) % n, (i + n - 1) % n] {
                if j != i {
                    rates.insert((i, j), 1.0);
                }
            }
        }
        Ok(Self::from_map(Shape::Torus1d(n), n, &rates))
    }

    pub fn torus_2d(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyLattice);
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut rates = BTreeMap::new();
        for r in 0..rows {
            for c in 0..cols {
                let here = idx(r, c);
                let neighbors = [
                    idx((r + 1) % rows, c),
                    idx((r + rows - 1) % rows, c),
                    idx(r, (c + 1) % cols),
                    idx(r, (c + cols - 1) % cols),
                ];
                for j in neighbors {
                    if j != here {
                        rates.insert((here, j), 1.0);
                    }
                }
            }
        }
        Ok(Self::from_map(Shape::Torus2d(rows, cols), rows * cols, &rates))
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyLattice);
        }
        let mut rates = BTreeMap::new();
        if n > 1 {
            let rate = 1.0 / (n - 1) as f64;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        rates.insert((i, j), rate);
                    }
                }
            }
        }
        Ok(Self::from_map(Shape::Complete(n), n, &rates))
    }

    /// Lattice from an explicit edge list `(from, to, rate)`. Repeated edges
    /// add up; zero rates are dropped.
    pub fn custom(sites: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if sites == 0 {
            return Err(Error::EmptyLattice);
        }
        let mut rates = BTreeMap::new();
        for &(from, to, rate) in edges {
            if from >= sites || to >= sites {
                return Err(Error::SiteOutOfRange { from, to, sites });
            }
            if rate.is_nan() || rate < 0.0 {
                return Err(Error::NegativeRate { from, to, rate });
            }
            if from == to {
                if rate > 0.0 {
                    return Err(Error::SelfLoop { site: from, rate });
                }
                continue;
            }
            *rates.entry((from, to)).or_insert(0.0) += rate;
        }
        Ok(Self::from_map(Shape::Custom, sites, &rates))
    }

    fn from_map(shape: Shape, sites: usize, rates: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut out = vec![Vec::new(); sites];
        let mut inc = vec![Vec::new(); sites];
        for (&(i, j), &r) in rates {
            if r > 0.0 {
                out[i].push((j, r));
                inc[j].push((i, r));
            }
        }
        for list in inc.iter_mut() {
            list.sort_by_key(|&(j, _)| j);
        }
        Self {
            shape,
            sites,
            out,
            inc,
        }
    }

    /// The lattice of the reversed kernel `q†(i,j) = q(j,i)`.
    pub fn transposed(&self) -> Self {
        Self {
            shape: self.shape,
            sites: self.sites,
            out: self.inc.clone(),
            inc: self.out.clone(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.sites
    }

    pub fn is_empty(&self) -> bool {
        self.sites == 0
    }

    /// `q(i,j)`; zero on the diagonal and for absent edges.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.out[i]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map_or(0.0, |pos| self.out[i][pos].1)
    }

    /// Outgoing edges `(j, q(i,j))` of site `i`.
    pub fn out_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.out[i]
    }

    /// Incoming edges `(j, q(j,i))` of site `i`.
    pub fn in_edges(&self, i: usize) -> &[(usize, f64)] {
        &self.inc[i]
    }

    /// `Σ_j q(i,j)`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.out[i].iter().map(|&(_, r)| r).sum()
    }

    /// `Σ_j q(j,i)`.
    pub fn entry_rate(&self, i: usize) -> f64 {
        self.inc[i].iter().map(|&(_, r)| r).sum()
    }

    /// All positive-rate edges `(i, j, q(i,j))`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().map(move |&(j, r)| (i, j, r)))
    }

    pub fn validate(&self) -> ValidationReport {
        validate_kernel(self)
    }

    /// Random-walk transition kernel `P_t(i,j)`.
    pub fn transition_semigroup(&self, t: f64) -> Result<DenseMatrix> {
        transition_semigroup(self, t)
    }

    /// Site permutation `i ↦ i + shift` for tori (`shift = (dr, dc)` on 2-d
    /// tori, `dr` alone on rings); `None` for shapes without a translation
    /// group.
    pub fn translation(&self, dr: usize, dc: usize) -> Option<Vec<usize>> {
        match self.shape {
            Shape::Torus1d(n) => Some((0..n).map(|i| (i + dr) % n).collect()),
            Shape::Torus2d(rows, cols) => Some(
                (0..rows * cols)
                    .map(|i| {
                        let (r, c) = (i / cols, i % cols);
                        ((r + dr) % rows) * cols + (c + dc) % cols
                    })
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Checks uniform summability, weak irreducibility and invariance of the
/// counting measure.
pub fn validate_kernel(lat: &Lattice) -> ValidationReport {
    let n = lat.len();
    let max_exit_rate = (0..n).map(|i| lat.exit_rate(i)).fold(0.0, f64::max);
    let max_flow_imbalance = (0..n)
        .map(|i| libm::fabs(lat.entry_rate(i) - lat.exit_rate(i)))
        .fold(0.0, f64::max);

    // Irreducibility in the weak sense: the graph with an undirected edge
    // wherever q(i,j) > 0 or q(j,i) > 0 is connected.
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = stack.pop() {
        for &(j, _) in lat.out_edges(i).iter().chain(lat.in_edges(i)) {
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                stack.push(j);
            }
        }
    }

    ValidationReport {
        max_exit_rate,
        irreducible: reached == n,
        counting_measure_invariant: max_flow_imbalance <= FLOW_TOLERANCE,
        max_flow_imbalance,
    }
}

/// Generator of a single random walk on the lattice.
pub fn walk_generator(lat: &Lattice) -> SparseGenerator {
    let rows: Vec<Vec<(usize, f64)>> = (0..lat.len()).map(|i| lat.out_edges(i).to_vec()).collect();
    SparseGenerator::from_rows(&rows)
}

/// `P_t(i,j)`, the probability that the walk started at `i` is at `j` at time
/// `t`, computed row by row by uniformization.
pub fn transition_semigroup(lat: &Lattice, t: f64) -> Result<DenseMatrix> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let n = lat.len();
    let generator = walk_generator(lat);
    let mut out = DenseMatrix::zeros(n, n);
    let mut delta = vec![0.0; n];
    for i in 0..n {
        delta[i] = 1.0;
        let row = generator.propagate_distribution(&delta, t, DEFAULT_TOLERANCE)?;
        out.row_mut(i).copy_from_slice(&row);
        delta[i] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn built_ins() -> Vec<Lattice> {
        vec![
            Lattice::torus_1d(1).unwrap(),
            Lattice::torus_1d(2).unwrap(),
            Lattice::torus_1d(5).unwrap(),
            Lattice::torus_2d(2, 2).unwrap(),
            Lattice::torus_2d(3, 4).unwrap(),
            Lattice::complete(3).unwrap(),
            Lattice::complete(6).unwrap(),
        ]
    }

    #[test]
    fn smallest_ring() {
        let lat = Lattice::torus_1d(2).unwrap();
        assert_eq!(lat.len(), 2);
        assert_eq!(lat.rate(0, 1), 1.0);
        assert_eq!(lat.rate(1, 0), 1.0);
        assert_eq!(lat.rate(0, 0), 0.0);
    }

    #[test]
    fn complete_graph_normalization() {
        let lat = Lattice::complete(3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert_eq!(lat.rate(i, j), expected);
            }
        }
    }

    #[test]
    fn asymmetric_custom_fails_invariance() {
        let lat = Lattice::custom(2, &[(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        let report = validate_kernel(&lat);
        assert!(report.irreducible);
        assert!(!report.counting_measure_invariant);
        assert_eq!(report.max_flow_imbalance, 1.0);
        assert!(!report.passed());
    }

    #[test]
    fn ring_report() {
        let report = validate_kernel(&Lattice::torus_1d(4).unwrap());
        assert!(report.passed());
        assert_eq!(report.max_exit_rate, 2.0);
        assert_eq!(report.max_flow_imbalance, 0.0);
    }

    #[test]
    fn disconnected_pair_of_two_cycles() {
        let lat = Lattice::custom(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
        let report = validate_kernel(&lat);
        assert!(!report.irreducible);
        assert!(report.counting_measure_invariant);
    }

    #[test]
    fn builder_errors() {
        assert_eq!(Lattice::torus_1d(0), Err(Error::EmptyLattice));
        assert_eq!(Lattice::custom(0, &[]), Err(Error::EmptyLattice));
        assert!(matches!(
            Lattice::custom(2, &[(0, 1, -1.0)]),
            Err(Error::NegativeRate { .. })
        ));
        assert!(matches!(
            Lattice::custom(2, &[(0, 2, 1.0)]),
            Err(Error::SiteOutOfRange { .. })
        ));
        assert!(matches!(
            Lattice::custom(2, &[(1, 1, 1.0)]),
            Err(Error::SelfLoop { .. })
        ));
    }

    #[test]
    fn built_ins_validate() {
        for lat in built_ins() {
            assert!(lat.validate().passed(), "{:?}", lat.shape());
        }
    }

    #[test]
    fn semigroup_identity_at_zero() {
        for lat in built_ins() {
            let p = lat.transition_semigroup(0.0).unwrap();
            assert_eq!(p, DenseMatrix::identity(lat.len()));
        }
        assert!(matches!(
            transition_semigroup(&Lattice::torus_1d(3).unwrap(), -0.1),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn two_site_closed_form() {
        let lat = Lattice::torus_1d(2).unwrap();
        for &t in &[0.05, 0.5, 2.0, 10.0] {
            let p = lat.transition_semigroup(t).unwrap();
            let exact = 0.5 * (1.0 + libm::exp(-2.0 * t));
            assert!((p[(0, 0)] - exact).abs() < 1e-12);
            assert!((p[(1, 0)] - (1.0 - exact)).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_is_doubly_stochastic() {
        let p = Lattice::torus_1d(4).unwrap().transition_semigroup(1.0).unwrap();
        for s in p.row_sums().iter().chain(p.col_sums().iter()) {
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn transpose_reverses_edges() {
        let lat = Lattice::custom(3, &[(0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        let t = lat.transposed();
        assert_eq!(t.rate(1, 0), 2.0);
        assert_eq!(t.rate(2, 1), 0.5);
        assert_eq!(t.rate(0, 1), 0.0);
        assert_eq!(t.transposed(), lat);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stochastic_both_ways(which in 0usize..7, t in 0.0f64..6.0) {
            let lat = &built_ins()[which];
            let p = lat.transition_semigroup(t).unwrap();
            for s in p.row_sums().iter().chain(p.col_sums().iter()) {
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn chapman_kolmogorov(which in 0usize..7, t in 0.0f64..3.0, s in 0.0f64..3.0) {
            let lat = &built_ins()[which];
            let lhs = lat.transition_semigroup(t + s).unwrap();
            let rhs = lat.transition_semigroup(t).unwrap().mul(&lat.transition_semigroup(s).unwrap());
            prop_assert!(lhs.max_abs_diff(&rhs) < 1e-8);
        }

        #[test]
        fn symmetric_kernels_give_symmetric_semigroup(which in 0usize..7, t in 0.0f64..4.0) {
            let lat = &built_ins()[which];
            let p = lat.transition_semigroup(t).unwrap();
            prop_assert!(p.max_abs_diff(&p.transpose()) < 1e-12);
        }
    }
}
