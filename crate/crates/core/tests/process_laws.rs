//! Monte Carlo laws of the simulators and couplings against the exact
//! truncated-chain oracle.

use branco_core::branco::simulate;
use branco_core::couplings::{comparison_simulate, default_coupling_rate, pure_birth_domination, standard_coupling_simulate, TriState};
use branco_core::duality::duality_functional;
use branco_core::oracle::TruncatedChain;
use branco_core::rng::stream_rng;
use branco_core::*;

const REPLICATES: u64 = 20_000;
const Z: f64 = 4.0;

struct Probe {
    name: &'static str,
    f: Box<dyn Fn(&OccupancyState) -> f64>,
}

fn probes(sites: usize) -> Vec<Probe> {
    let phi = FrequencyState::point(sites, 0, 0.4).unwrap();
    let half = DualityParams::new(0.5).unwrap();
    vec![
        Probe {
            name: "total",
            f: Box::new(|x| x.total() as f64),
        },
        Probe {
            name: "empty",
            f: Box::new(|x| f64::from(u8::from(x.total() == 0))),
        },
        Probe {
            name: "site0 squared",
            f: Box::new(|x| (x.get(0) * x.get(0)) as f64),
        },
        Probe {
            name: "functional",
            f: Box::new(move |x| duality_functional(x, &phi, half)),
        },
    ]
}

/// Compares sample means of the probes with their oracle expectations.
fn assert_matches_oracle(label: &str, samples: &[OccupancyState], lat: &Lattice, p: &RateParams, cap: u64, x0: &OccupancyState, t: f64) {
    let chain = TruncatedChain::new(lat, p, cap).unwrap();
    let law = chain.transient_distribution(&chain.point_mass(x0).unwrap(), t).unwrap();
    assert!(law.suppressed_mass < 1e-6, "{label}: cap {cap} too small ({})", law.suppressed_mass);
    for probe in probes(lat.len()) {
        let exact: f64 = chain
            .tabulate(|x| (probe.f)(x))
            .iter()
            .zip(&law.distribution)
            .map(|(f, w)| f * w)
            .sum();
        let stats: EnsembleStats = samples.iter().map(|x| (probe.f)(x)).collect();
        let z = (stats.mean() - exact) / stats.standard_error().max(1e-12);
        assert!(z.abs() < Z, "{label} {}: mc {} exact {exact} z {z}", probe.name, stats.mean());
    }
}

#[test]
fn ring_simulator_matches_oracle() {
    let lat = Lattice::torus_1d(3).unwrap();
    let p = RateParams::new(0.5, 0.5, 1.0, 0.5).unwrap();
    let x0 = OccupancyState::uniform(3, 1);
    let samples: Vec<_> = (0..REPLICATES)
        .map(|r| simulate(&x0, &p, &lat, &[0.4], &mut stream_rng(1, 0, r)).unwrap().pop().unwrap())
        .collect();
    assert_matches_oracle("ring", &samples, &lat, &p, 10, &x0, 0.4);
}

#[test]
fn asymmetric_kernel_matches_oracle() {
    let lat = Lattice::custom(3, &[(0, 1, 2.0), (1, 2, 2.0), (2, 0, 2.0), (1, 0, 0.5), (2, 1, 0.5), (0, 2, 0.5)]).unwrap();
    let p = RateParams::new(1.0, 1.0, 0.0, 0.5).unwrap();
    let x0 = OccupancyState::new(vec![2, 0, 1]);
    let samples: Vec<_> = (0..REPLICATES)
        .map(|r| simulate(&x0, &p, &lat, &[0.3], &mut stream_rng(2, 0, r)).unwrap().pop().unwrap())
        .collect();
    assert_matches_oracle("drifting ring", &samples, &lat, &p, 10, &x0, 0.3);
}

#[test]
fn standard_coupling_marginals_match_oracle() {
    let lat = Lattice::torus_1d(2).unwrap();
    let p = RateParams::new(1.0, 0.5, 1.0, 0.5).unwrap();
    let init = TriState {
        y01: OccupancyState::new(vec![1, 0]),
        y11: OccupancyState::new(vec![1, 1]),
        y10: OccupancyState::new(vec![0, 2]),
    };
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for r in 0..REPLICATES {
        let out = standard_coupling_simulate(&init, &p, default_coupling_rate(&p), &lat, &[0.5], &mut stream_rng(3, 0, r))
            .unwrap()
            .pop()
            .unwrap();
        left.push(out.left());
        right.push(out.right());
    }
    assert_matches_oracle("left", &left, &lat, &p, 12, &init.left(), 0.5);
    assert_matches_oracle("right", &right, &lat, &p, 12, &init.right(), 0.5);
}

#[test]
fn comparison_coupling_marginals_match_oracle() {
    let lat = Lattice::torus_1d(2).unwrap();
    let p = RateParams::new(1.0, 0.5, 1.0, 0.5).unwrap();
    let upper = RateParams::new(0.0, 1.0, 1.5, 0.25).unwrap();
    let x0 = OccupancyState::new(vec![2, 0]);
    let upper_x0 = OccupancyState::new(vec![2, 1]);
    let (mut lower, mut top) = (Vec::new(), Vec::new());
    for r in 0..REPLICATES {
        let out = comparison_simulate(&x0, &upper_x0, &p, &upper, &lat, &[0.4], &mut stream_rng(4, 0, r))
            .unwrap()
            .pop()
            .unwrap();
        assert!(out.black.le(&out.total()));
        lower.push(out.black.clone());
        top.push(out.total());
    }
    assert_matches_oracle("lower", &lower, &lat, &p, 12, &x0, 0.4);
    assert_matches_oracle("upper", &top, &lat, &upper, 12, &upper_x0, 0.4);
}

#[test]
fn dominating_system_grows_at_jump_plus_birth_rate() {
    let lat = Lattice::torus_1d(3).unwrap();
    let p = RateParams::new(1.0, 0.7, 1.0, 0.3).unwrap();
    let x0 = OccupancyState::new(vec![2, 1, 0]);
    let t = 0.8;
    let mut lower = Vec::new();
    let mut size = EnsembleStats::new();
    for r in 0..REPLICATES {
        let out = pure_birth_domination(&x0, &p, &lat, &[t], &mut stream_rng(5, 0, r)).unwrap().pop().unwrap();
        size.push(out.total().total() as f64);
        lower.push(out.black);
    }
    // Every particle of V spawns at rate |q| + b = 2 + b.
    let exact = 3.0 * ((2.0 + 0.7) * t).exp();
    assert!((size.mean() - exact).abs() < Z * size.standard_error(), "{} vs {exact}", size.mean());
    assert_matches_oracle("dominated", &lower, &lat, &p, 12, &x0, t);
}
