//! The duality function `Ψ(x,φ) = Π_i (1-(1+α)φ(i))^{x(i)}`, the parameter
//! dictionary between the particle system and the Wright-Fisher system, the
//! exact generator identity, and the thinning and Poisson samplers.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::branco::{check_len, OccupancyState, RateParams};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::resem::{FrequencyState, ResemParams};

/// Annihilation fraction `α = a/(a+c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityParams {
    alpha: f64,
}

impl DualityParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(Self { alpha })
        } else {
            Err(Error::InvalidParameter("alpha must lie in [0,1]"))
        }
    }

    pub fn from_rates(p: &RateParams) -> Result<Self> {
        p.require_pair_interaction()?;
        Self::new(p.annihilation / p.pair_rate())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `1 + α`, the factor multiplying `φ` inside the duality function.
    pub fn scale(&self) -> f64 {
        1.0 + self.alpha
    }
}

/// A matched pair of particle rates and Wright-Fisher rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBridge {
    pub branco: RateParams,
    pub resem: ResemParams,
    pub alpha: DualityParams,
}

impl ParamBridge {
    pub fn from_branco(p: &RateParams) -> Result<Self> {
        let (alpha, resem) = branco_to_resem(p)?;
        Ok(Self {
            branco: *p,
            resem,
            alpha,
        })
    }

    pub fn from_resem(alpha: DualityParams, resem: &ResemParams) -> Result<Self> {
        Ok(Self {
            branco: resem_to_branco(alpha, resem)?,
            resem: *resem,
            alpha,
        })
    }

    /// Annihilation-free process whose `1/(1+α)`-thinning has the law of
    /// the bridged particle system: rates `(0, (1+α)b, a+c, αb+d)`.
    pub fn thinning_partner(&self) -> RateParams {
        let p = &self.branco;
        let alpha = self.alpha.alpha();
        RateParams {
            annihilation: 0.0,
            branching: (1.0 + alpha) * p.branching,
            coalescence: p.pair_rate(),
            death: alpha * p.branching + p.death,
        }
    }

    /// Retention probability `1/(1+α)` of the thinning relation.
    pub fn thinning_probability(&self) -> f64 {
        1.0 / self.alpha.scale()
    }

    /// Particle system with annihilation fraction `β ≤ α` and the same
    /// Wright-Fisher dual, together with the retention probability
    /// `(1+β)/(1+α)` that thins it into the bridged system.
    pub fn partner(&self, beta: f64) -> Result<(RateParams, f64)> {
        let beta = DualityParams::new(beta)?;
        if beta.alpha() > self.alpha.alpha() {
            return Err(Error::InvalidParameter("partner fraction must not exceed alpha"));
        }
        let rates = resem_to_branco(beta, &self.resem)?;
        Ok((rates, beta.scale() / self.alpha.scale()))
    }

    /// Intensity factor `s/((1+α)r)` of the Poissonization relation.
    pub fn poisson_scale(&self) -> f64 {
        self.resem.selection / (self.alpha.scale() * self.resem.resampling)
    }
}

/// `α = a/(a+c)`, `r = a+c`, `s = (1+α)b`, `m = αb+d`.
pub fn branco_to_resem(p: &RateParams) -> Result<(DualityParams, ResemParams)> {
    p.validate()?;
    let alpha = DualityParams::from_rates(p)?;
    let a = alpha.alpha();
    let resem = ResemParams::new(p.pair_rate(), (1.0 + a) * p.branching, a * p.branching + p.death)?;
    Ok((alpha, resem))
}

/// `a = αr`, `b = s/(1+α)`, `c = (1-α)r`, `d = m - αs/(1+α)`.
pub fn resem_to_branco(alpha: DualityParams, p: &ResemParams) -> Result<RateParams> {
    p.validate()?;
    if p.resampling <= 0.0 {
        return Err(Error::InvalidParameter("resampling rate must be positive"));
    }
    let a = alpha.alpha();
    let death = p.mutation - a * p.selection / (1.0 + a);
    // Tolerate rounding just below zero so that round trips stay valid.
    if death < -1e-12 * p.mutation.max(1.0) {
        return Err(Error::InvalidParameter("m - αs/(1+α) must be nonnegative"));
    }
    RateParams::new(
        a * p.resampling,
        p.selection / (1.0 + a),
        (1.0 - a) * p.resampling,
        death.max(0.0),
    )
}

fn ipow(base: f64, n: u64) -> f64 {
    // pow(0, 0) = 1, matching the convention 0^0 := 1.
    libm::pow(base, n as f64)
}

/// `Π_i (1-(1+α)φ(i))^{x(i)}` with `0^0 = 1`.
pub fn duality_functional(x: &OccupancyState, phi: &FrequencyState, alpha: DualityParams) -> f64 {
    assert_eq!(x.len(), phi.len(), "state and field live on different lattices");
    let k = alpha.scale();
    x.counts()
        .iter()
        .zip(phi.values())
        .filter(|(&n, _)| n > 0)
        .map(|(&n, &f)| ipow(1.0 - k * f, n))
        .product()
}

/// `Ψ(x + Σ shifts, φ)` for small signed shifts that keep `x` nonnegative.
fn psi_shifted(
    x: &OccupancyState,
    phi: &FrequencyState,
    alpha: DualityParams,
    shifts: &[(usize, i64)],
) -> f64 {
    let mut counts = x.counts().to_vec();
    for &(i, dn) in shifts {
        counts[i] = (counts[i] as i64 + dn) as u64;
    }
    duality_functional(&OccupancyState::new(counts), phi, alpha)
}

/// `(GΨ(·,φ))(x)` evaluated mechanism by mechanism from the particle
/// generator.
pub fn particle_generator_on_duality(
    x: &OccupancyState,
    phi: &FrequencyState,
    p: &RateParams,
    lat: &Lattice,
) -> Result<f64> {
    check_len(lat, x.len())?;
    check_len(lat, phi.len())?;
    let alpha = DualityParams::from_rates(p)?;
    let base = duality_functional(x, phi, alpha);
    let mut total = 0.0;
    for (i, j, q) in lat.edges() {
        let n = x.get(i) as f64;
        if n > 0.0 {
            total += q * n * (psi_shifted(x, phi, alpha, &[(i, -1), (j, 1)]) - base);
        }
    }
    for i in 0..lat.len() {
        let n = x.get(i) as f64;
        if n == 0.0 {
            continue;
        }
        let pairs = n * (n - 1.0);
        let minus_one = psi_shifted(x, phi, alpha, &[(i, -1)]) - base;
        let plus_one = psi_shifted(x, phi, alpha, &[(i, 1)]) - base;
        total += p.branching * n * plus_one + p.death * n * minus_one;
        if pairs > 0.0 {
            let minus_two = psi_shifted(x, phi, alpha, &[(i, -2)]) - base;
            total += p.annihilation * pairs * minus_two + p.coalescence * pairs * minus_one;
        }
    }
    Ok(total)
}

/// `(𝒢†Ψ(x,·))(φ)`: the Wright-Fisher generator with transposed kernel and
/// bridged rates, applied through the closed-form derivatives of `Ψ`.
pub fn dual_generator_on_duality(
    x: &OccupancyState,
    phi: &FrequencyState,
    p: &RateParams,
    lat: &Lattice,
) -> Result<f64> {
    check_len(lat, x.len())?;
    check_len(lat, phi.len())?;
    let bridge = ParamBridge::from_branco(p)?;
    let alpha = bridge.alpha;
    let k = alpha.scale();
    let ResemParams {
        resampling: r,
        selection: s,
        mutation: m,
    } = bridge.resem;
    let first: Vec<f64> = (0..lat.len())
        .map(|i| {
            let n = x.get(i) as f64;
            if n == 0.0 {
                0.0
            } else {
                -k * n * psi_shifted(x, phi, alpha, &[(i, -1)])
            }
        })
        .collect();
    let mut total = 0.0;
    for i in 0..lat.len() {
        let n = x.get(i) as f64;
        if n == 0.0 {
            continue;
        }
        let f = phi.get(i);
        // The dual kernel is q†(j,i) = q(i,j).
        let migration: f64 = lat.out_edges(i).iter().map(|&(j, q)| q * (phi.get(j) - f)).sum();
        total += (migration + s * f * (1.0 - f) - m * f) * first[i];
        if n >= 2.0 {
            let second = k * k * n * (n - 1.0) * psi_shifted(x, phi, alpha, &[(i, -2)]);
            total += r * f * (1.0 - f) * second;
        }
    }
    Ok(total)
}

/// `|GΨ(·,φ)(x) - 𝒢†Ψ(x,·)(φ)|`.
pub fn generator_identity_check(
    x: &OccupancyState,
    phi: &FrequencyState,
    p: &RateParams,
    lat: &Lattice,
) -> Result<f64> {
    let lhs = particle_generator_on_duality(x, phi, p, lat)?;
    let rhs = dual_generator_on_duality(x, phi, p, lat)?;
    Ok((lhs - rhs).abs())
}

/// Keeps each particle at site `i` independently with probability `φ(i)`.
pub fn thin_sample<R: Rng + ?Sized>(
    x: &OccupancyState,
    phi: &FrequencyState,
    rng: &mut R,
) -> Result<OccupancyState> {
    if x.len() != phi.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: phi.len(),
        });
    }
    let counts = x
        .counts()
        .iter()
        .zip(phi.values())
        .map(|(&n, &f)| binomial(rng, n, f))
        .collect();
    Ok(OccupancyState::new(counts))
}

/// Thinning with the same retention probability on every site.
pub fn thin_uniform<R: Rng + ?Sized>(x: &OccupancyState, keep: f64, rng: &mut R) -> Result<OccupancyState> {
    thin_sample(x, &FrequencyState::constant(x.len(), keep)?, rng)
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("validated binomial parameters").sample(rng)
    }
}

/// Independent Poisson counts with the given per-site intensities.
pub fn pois_sample<R: Rng + ?Sized>(intensity: &[f64], rng: &mut R) -> Result<OccupancyState> {
    if let Some(site) = intensity.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::NegativeIntensity {
            site,
            value: intensity[site],
        });
    }
    let counts = intensity
        .iter()
        .map(|&lambda| {
            if lambda == 0.0 {
                0
            } else {
                let v: f64 = Poisson::new(lambda).expect("validated intensity").sample(rng);
                v as u64
            }
        })
        .collect();
    Ok(OccupancyState::new(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::stats::EnsembleStats;
    use proptest::prelude::*;

    fn rates(a: f64, b: f64, c: f64, d: f64) -> RateParams {
        RateParams::new(a, b, c, d).unwrap()
    }

    #[test]
    fn partner_endpoints() {
        let bridge = ParamBridge::from_branco(&RateParams::new(1.0, 3.0, 1.0, 0.0).unwrap()).unwrap();
        let (zero, keep) = bridge.partner(0.0).unwrap();
        let expected = bridge.thinning_partner();
        for (u, v) in [
            (zero.annihilation, expected.annihilation),
            (zero.branching, expected.branching),
            (zero.coalescence, expected.coalescence),
            (zero.death, expected.death),
        ] {
            assert!((u - v).abs() < 1e-12);
        }
        assert!((keep - bridge.thinning_probability()).abs() < 1e-15);
        let (same, one) = bridge.partner(0.5).unwrap();
        assert!((same.branching - 3.0).abs() < 1e-12 && (same.annihilation - 1.0).abs() < 1e-12);
        assert_eq!(one, 1.0);
        assert!(bridge.partner(0.6).is_err());
    }

    #[test]
    fn forward_map_example() {
        let (alpha, r) = branco_to_resem(&rates(1.0, 3.0, 1.0, 0.0)).unwrap();
        assert_eq!(alpha.alpha(), 0.5);
        assert_eq!((r.resampling, r.selection, r.mutation), (2.0, 4.5, 1.5));
    }

    #[test]
    fn annihilation_free_map() {
        let (alpha, r) = branco_to_resem(&rates(0.0, 1.3, 0.7, 0.2)).unwrap();
        assert_eq!(alpha.alpha(), 0.0);
        assert_eq!((r.resampling, r.selection, r.mutation), (0.7, 1.3, 0.2));
        assert!(branco_to_resem(&rates(0.0, 1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn inverse_rejects_negative_death() {
        let alpha = DualityParams::new(1.0).unwrap();
        let p = ResemParams::new(1.0, 4.0, 1.0).unwrap();
        assert!(resem_to_branco(alpha, &p).is_err());
    }

    #[test]
    fn thinning_partner_rates() {
        let bridge = ParamBridge::from_branco(&rates(1.0, 3.0, 1.0, 0.0)).unwrap();
        let bar = bridge.thinning_partner();
        assert_eq!(bar, rates(0.0, 4.5, 2.0, 1.5));
        assert!((bridge.thinning_probability() - 2.0 / 3.0).abs() < 1e-15);
        assert!((bridge.poisson_scale() - 4.5 / (1.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn functional_values() {
        let half = DualityParams::new(0.5).unwrap();
        let one = DualityParams::new(1.0).unwrap();
        let phi = FrequencyState::constant(2, 0.7).unwrap();
        assert_eq!(duality_functional(&OccupancyState::zeros(2), &phi, half), 1.0);
        let phi1 = FrequencyState::point(1, 0, 1.0).unwrap();
        assert_eq!(duality_functional(&OccupancyState::point(1, 0, 1), &phi1, one), -1.0);
        let phi2 = FrequencyState::point(1, 0, 0.4).unwrap();
        let v = duality_functional(&OccupancyState::point(1, 0, 2), &phi2, half);
        assert!((v - 0.16).abs() < 1e-15);
        // Zero base to the zero power.
        let phi3 = FrequencyState::new(vec![2.0 / 3.0, 0.1]).unwrap();
        let v = duality_functional(&OccupancyState::new(vec![0, 1]), &phi3, half);
        assert!((v - 0.85).abs() < 1e-15);
    }

    #[test]
    fn identity_at_empty_state() {
        let lat = Lattice::torus_1d(3).unwrap();
        let phi = FrequencyState::new(vec![0.1, 0.5, 0.9]).unwrap();
        let p = rates(1.0, 2.0, 0.5, 0.3);
        assert_eq!(particle_generator_on_duality(&OccupancyState::zeros(3), &phi, &p, &lat).unwrap(), 0.0);
        assert_eq!(generator_identity_check(&OccupancyState::zeros(3), &phi, &p, &lat).unwrap(), 0.0);
    }

    #[test]
    fn identity_on_asymmetric_kernel() {
        // A one-way kernel makes the transposition visible.
        let lat = Lattice::custom(3, &[(0, 1, 1.5), (1, 2, 0.5), (2, 0, 0.25), (0, 2, 0.1)]).unwrap();
        let p = rates(0.8, 1.1, 0.4, 0.6);
        let x = OccupancyState::new(vec![3, 0, 2]);
        let phi = FrequencyState::new(vec![0.2, 0.7, 0.45]).unwrap();
        assert!(generator_identity_check(&x, &phi, &p, &lat).unwrap() < 1e-12);
    }

    #[test]
    fn thin_extremes() {
        let x = OccupancyState::new(vec![3, 0, 7]);
        let mut rng = stream_rng(0, 0, 0);
        assert_eq!(thin_uniform(&x, 1.0, &mut rng).unwrap(), x);
        assert_eq!(thin_uniform(&x, 0.0, &mut rng).unwrap(), OccupancyState::zeros(3));
    }

    #[test]
    fn thin_binomial_half() {
        let x = OccupancyState::point(1, 0, 2);
        let mut freq = [0u64; 3];
        let n = 40_000;
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..n {
            freq[thin_uniform(&x, 0.5, &mut rng).unwrap().total() as usize] += 1;
        }
        for (k, expected) in [0.25, 0.5, 0.25].iter().enumerate() {
            let p = freq[k] as f64 / n as f64;
            let se = libm::sqrt(expected * (1.0 - expected) / n as f64);
            assert!((p - expected).abs() < 3.0 * se, "k={k}: {p}");
        }
    }

    #[test]
    fn poisson_moments_and_void() {
        let mut rng = stream_rng(2, 0, 0);
        assert_eq!(pois_sample(&[0.0, 0.0], &mut rng).unwrap(), OccupancyState::zeros(2));
        assert!(pois_sample(&[-1.0], &mut rng).is_err());
        for &lambda in &[0.7, 3.0, 25.0] {
            let mut stats = EnsembleStats::new();
            let mut zeros = 0u64;
            let n = 40_000;
            for _ in 0..n {
                let k = pois_sample(&[lambda], &mut rng).unwrap().total() as f64;
                stats.push(k);
                zeros += (k == 0.0) as u64;
            }
            assert!((stats.mean() - lambda).abs() < 4.0 * stats.standard_error());
            // Variance estimator SE ≈ sqrt((μ4 - σ⁴)/n) with μ4 = λ + 3λ².
            let var_se = libm::sqrt((lambda + 2.0 * lambda * lambda) / n as f64);
            assert!((stats.variance() - lambda).abs() < 4.0 * var_se);
            let void = libm::exp(-lambda);
            let void_se = libm::sqrt(void * (1.0 - void) / n as f64).max(1e-12);
            assert!(((zeros as f64 / n as f64) - void).abs() <= 4.0 * void_se + 1e-9);
        }
    }

    #[test]
    fn thinning_a_poisson_field() {
        // Thin_θ(Pois(λ)) has void probability e^{-θλ}.
        let (lambda, theta, n) = (2.5, 0.4, 40_000);
        let mut rng = stream_rng(3, 0, 0);
        let mut zeros = 0u64;
        for _ in 0..n {
            let x = pois_sample(&[lambda], &mut rng).unwrap();
            zeros += thin_uniform(&x, theta, &mut rng).unwrap().is_empty() as u64;
        }
        let void = libm::exp(-theta * lambda);
        let se = libm::sqrt(void * (1.0 - void) / n as f64);
        assert!(((zeros as f64 / n as f64) - void).abs() < 4.0 * se);
    }

    #[test]
    fn thinning_composition() {
        // E[(1-ψ)^{Thin_φ(Thin_χ(x))}] = (1 - φχψ)^x.
        let x = OccupancyState::new(vec![4, 2]);
        let phi = FrequencyState::new(vec![0.6, 0.3]).unwrap();
        let chi = FrequencyState::new(vec![0.5, 0.9]).unwrap();
        let mut rng = stream_rng(4, 0, 0);
        for psi in [0.3, 0.8, 1.0] {
            let mut stats = EnsembleStats::new();
            for _ in 0..20_000 {
                let y = thin_sample(&thin_sample(&x, &chi, &mut rng).unwrap(), &phi, &mut rng).unwrap();
                stats.push(libm::pow(1.0 - psi, y.get(0) as f64) * libm::pow(1.0 - psi, y.get(1) as f64));
            }
            let exact = libm::pow(1.0 - 0.6 * 0.5 * psi, 4.0) * libm::pow(1.0 - 0.3 * 0.9 * psi, 2.0);
            assert!((stats.mean() - exact).abs() < 4.0 * stats.standard_error().max(1e-6));
        }
    }

    proptest! {
        #[test]
        fn bridge_round_trip(a in 0.0f64..5.0, b in 0.0f64..5.0, c in 0.0f64..5.0, d in 0.0f64..5.0) {
            prop_assume!(a + c > 1e-3);
            let p = rates(a, b, c, d);
            let (alpha, r) = branco_to_resem(&p).unwrap();
            let back = resem_to_branco(alpha, &r).unwrap();
            for (u, v) in [(a, back.annihilation), (b, back.branching), (c, back.coalescence), (d, back.death)] {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn no_annihilation_is_additive(x in prop::collection::vec(0u64..6, 3), phi in prop::collection::vec(0.0f64..=1.0, 3)) {
            let st = OccupancyState::new(x.clone());
            let f = FrequencyState::new(phi.clone()).unwrap();
            let got = duality_functional(&st, &f, DualityParams::new(0.0).unwrap());
            let expected: f64 = x.iter().zip(&phi).map(|(&n, &v)| libm::pow(1.0 - v, n as f64)).product();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn functional_in_unit_ball(x in prop::collection::vec(0u64..8, 3), phi in prop::collection::vec(0.0f64..=1.0, 3), alpha in 0.0f64..=1.0) {
            let v = duality_functional(&OccupancyState::new(x), &FrequencyState::new(phi).unwrap(), DualityParams::new(alpha).unwrap());
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn generator_identity_holds(
            x in prop::collection::vec(0u64..=5, 4),
            phi in prop::collection::vec(0.0f64..=1.0, 4),
            a in 0.0f64..3.0, b in 0.0f64..3.0, c in 0.0f64..3.0, d in 0.0f64..3.0,
        ) {
            prop_assume!(a + c > 1e-3);
            let lat = Lattice::torus_2d(2, 2).unwrap();
            let dev = generator_identity_check(
                &OccupancyState::new(x), &FrequencyState::new(phi).unwrap(), &rates(a, b, c, d), &lat,
            ).unwrap();
            prop_assert!(dev < 1e-10);
        }

        #[test]
        fn thinning_never_adds(x in prop::collection::vec(0u64..20, 3), keep in 0.0f64..=1.0, seed in any::<u64>()) {
            let st = OccupancyState::new(x);
            let y = thin_uniform(&st, keep, &mut stream_rng(seed, 0, 0)).unwrap();
            prop_assert!(y.le(&st));
        }
    }
}
