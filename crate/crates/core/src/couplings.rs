//! Coupled multi-type particle systems:
//!
//! - the standard coupling with types `01`, `11`, `10`, whose sums
//!   `01+11` and `10+11` are both copies of the same particle system;
//! - the comparison coupling of black and white particles, where black is a
//!   `(q,a,b,c,d)` system and black+white an annihilation-free
//!   `(q,0,b̃,c̃,d̃)` system;
//! - the pure-birth domination, where black is the particle system and
//!   black+white never loses particles.
//!
//! All three run on one event-driven engine with per-site local rules.

use alloc::vec::Vec;

use rand::Rng;

use crate::branco::{check_grid, check_len, pick_target, OccupancyState, RateParams, DEFAULT_OCCUPANCY_CAP};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rng::{exp_waiting, uniform_below};
use crate::sum_tree::SumTree;

/// What a channel does to the counts.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Effect<const K: usize> {
    /// Change of the counts at the firing site.
    Local([i64; K]),
    /// Change at the firing site and at a target drawn from `q(i,·)`.
    Jump { source: [i64; K], target: [i64; K] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Channel<const K: usize> {
    rate: f64,
    effect: Effect<K>,
}

trait LocalRules<const K: usize> {
    /// Channels of one site with counts `n` and exit rate `exit`.
    fn channels(&self, n: &[u64; K], exit: f64, out: &mut Vec<Channel<K>>);
}

fn unit<const K: usize>(pairs: &[(usize, i64)]) -> [i64; K] {
    let mut d = [0; K];
    for &(k, v) in pairs {
        d[k] += v;
    }
    d
}

struct Engine<'a, const K: usize, R> {
    lattice: &'a Lattice,
    rules: R,
    counts: Vec<[u64; K]>,
    exit: Vec<f64>,
    tree: SumTree,
    buffer: Vec<Channel<K>>,
    time: f64,
    cap: u64,
}

impl<'a, const K: usize, L: LocalRules<K>> Engine<'a, K, L> {
    fn new(lattice: &'a Lattice, rules: L, counts: Vec<[u64; K]>) -> Self {
        let exit = (0..lattice.len()).map(|i| lattice.exit_rate(i)).collect();
        let mut engine = Self {
            lattice,
            rules,
            counts,
            exit,
            tree: SumTree::new(lattice.len()),
            buffer: Vec::new(),
            time: 0.0,
            cap: DEFAULT_OCCUPANCY_CAP,
        };
        for i in 0..lattice.len() {
            engine.refresh(i);
        }
        engine
    }

    fn refresh(&mut self, site: usize) {
        self.buffer.clear();
        self.rules.channels(&self.counts[site], self.exit[site], &mut self.buffer);
        let total = self.buffer.iter().map(|c| c.rate).sum();
        self.tree.set(site, total);
    }

    fn shift(&mut self, site: usize, delta: &[i64; K]) -> Result<()> {
        for (c, d) in self.counts[site].iter_mut().zip(delta) {
            let v = *c as i64 + d;
            assert!(v >= 0, "coupled event removed a missing particle");
            *c = v as u64;
            if *c > self.cap {
                return Err(Error::Explosion {
                    site,
                    count: *c,
                    cap: self.cap,
                });
            }
        }
        Ok(())
    }

    /// Fires the next event if it happens no later than `horizon`.
    fn step_until<G: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut G) -> Result<bool> {
        let wait = exp_waiting(rng, self.tree.total());
        if self.time + wait > horizon {
            self.time = self.time.max(horizon);
            return Ok(false);
        }
        self.time += wait;
        let site = self.tree.find(uniform_below(rng, self.tree.total()));
        self.buffer.clear();
        self.rules.channels(&self.counts[site], self.exit[site], &mut self.buffer);
        let total: f64 = self.buffer.iter().map(|c| c.rate).sum();
        let mut u = uniform_below(rng, total);
        let mut chosen = None;
        for c in &self.buffer {
            if c.rate <= 0.0 {
                continue;
            }
            chosen = Some(c.effect);
            if u < c.rate {
                break;
            }
            u -= c.rate;
        }
        match chosen.expect("site selected with zero rate") {
            Effect::Local(delta) => {
                self.shift(site, &delta)?;
                self.refresh(site);
            }
            Effect::Jump { source, target } => {
                let to = pick_target(self.lattice, site, rng);
                self.shift(site, &source)?;
                self.shift(to, &target)?;
                self.refresh(site);
                self.refresh(to);
            }
        }
        Ok(true)
    }

    fn run<G: Rng + ?Sized>(
        &mut self,
        t_grid: &[f64],
        rng: &mut G,
        mut after_event: impl FnMut(&[[u64; K]]) -> Result<()>,
    ) -> Result<Vec<Vec<[u64; K]>>> {
        let mut out = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            while self.step_until(t, rng)? {
                after_event(&self.counts)?;
            }
            out.push(self.counts.clone());
        }
        Ok(out)
    }
}

fn column<const K: usize>(counts: &[[u64; K]], k: usize) -> OccupancyState {
    OccupancyState::new(counts.iter().map(|c| c[k]).collect())
}

/// Pushes the same-type mechanisms of the particle generator for type `k`.
fn single_type<const K: usize>(k: usize, n: u64, exit: f64, p: &RateParams, out: &mut Vec<Channel<K>>) {
    if n == 0 {
        return;
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    out.push(Channel {
        rate: exit * nf,
        effect: Effect::Jump {
            source: unit(&[(k, -1)]),
            target: unit(&[(k, 1)]),
        },
    });
    out.push(Channel { rate: p.branching * nf, effect: Effect::Local(unit(&[(k, 1)])) });
    out.push(Channel { rate: p.death * nf, effect: Effect::Local(unit(&[(k, -1)])) });
    if pairs > 0.0 {
        out.push(Channel { rate: p.annihilation * pairs, effect: Effect::Local(unit(&[(k, -2)])) });
        out.push(Channel { rate: p.coalescence * pairs, effect: Effect::Local(unit(&[(k, -1)])) });
    }
}

/// Counts of the three types `01`, `11`, `10`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriState {
    pub y01: OccupancyState,
    pub y11: OccupancyState,
    pub y10: OccupancyState,
}

impl TriState {
    /// `X = y01 + y11`.
    pub fn left(&self) -> OccupancyState {
        sum(&self.y01, &self.y11)
    }

    /// `X' = y10 + y11`.
    pub fn right(&self) -> OccupancyState {
        sum(&self.y10, &self.y11)
    }
}

fn sum(a: &OccupancyState, b: &OccupancyState) -> OccupancyState {
    OccupancyState::new(a.counts().iter().zip(b.counts()).map(|(x, y)| x + y).collect())
}

const T01: usize = 0;
const T11: usize = 1;
const T10: usize = 2;

struct StandardRules {
    p: RateParams,
    coupling_rate: f64,
}

impl LocalRules<3> for StandardRules {
    fn channels(&self, n: &[u64; 3], exit: f64, out: &mut Vec<Channel<3>>) {
        for k in 0..3 {
            single_type(k, n[k], exit, &self.p, out);
        }
        let (u, v, w) = (n[T01] as f64, n[T11] as f64, n[T10] as f64);
        let (a2, c2) = (2.0 * self.p.annihilation, 2.0 * self.p.coalescence);
        let cross = [
            // 01 + 10 → 11
            (self.coupling_rate * u * w, unit(&[(T01, -1), (T10, -1), (T11, 1)])),
            // 01 + 11 → 10 and → 11
            (a2 * u * v, unit(&[(T01, -1), (T11, -1), (T10, 1)])),
            (c2 * u * v, unit(&[(T01, -1)])),
            // 10 + 11 → 01 and → 11
            (a2 * w * v, unit(&[(T10, -1), (T11, -1), (T01, 1)])),
            (c2 * w * v, unit(&[(T10, -1)])),
        ];
        for (rate, delta) in cross {
            if rate > 0.0 {
                out.push(Channel { rate, effect: Effect::Local(delta) });
            }
        }
    }
}

/// Default coupling rate `2(a+c)`.
pub fn default_coupling_rate(p: &RateParams) -> f64 {
    2.0 * p.pair_rate()
}

/// Standard coupling sampled at `t_grid`.
pub fn standard_coupling_simulate<G: Rng + ?Sized>(
    init: &TriState,
    p: &RateParams,
    coupling_rate: f64,
    lat: &Lattice,
    t_grid: &[f64],
    rng: &mut G,
) -> Result<Vec<TriState>> {
    p.validate()?;
    if !(coupling_rate >= 0.0 && coupling_rate.is_finite()) {
        return Err(Error::InvalidParameter("coupling rate must be nonnegative"));
    }
    check_grid(t_grid)?;
    for part in [&init.y01, &init.y11, &init.y10] {
        check_len(lat, part.len())?;
    }
    let counts = (0..lat.len()).map(|i| [init.y01.get(i), init.y11.get(i), init.y10.get(i)]).collect();
    let rules = StandardRules { p: *p, coupling_rate };
    let raw = Engine::new(lat, rules, counts).run(t_grid, rng, |_| Ok(()))?;
    Ok(raw
        .iter()
        .map(|c| TriState {
            y01: column(c, T01),
            y11: column(c, T11),
            y10: column(c, T10),
        })
        .collect())
}

/// Black and white particle counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiState {
    pub black: OccupancyState,
    pub white: OccupancyState,
}

impl BiState {
    /// Black plus white.
    pub fn total(&self) -> OccupancyState {
        sum(&self.black, &self.white)
    }
}

const BLACK: usize = 0;
const WHITE: usize = 1;

struct ComparisonRules {
    p: RateParams,
    upper: RateParams,
    theta: f64,
}

impl LocalRules<2> for ComparisonRules {
    fn channels(&self, n: &[u64; 2], exit: f64, out: &mut Vec<Channel<2>>) {
        let (p, up, theta) = (&self.p, &self.upper, self.theta);
        let (bn, wn) = (n[BLACK] as f64, n[WHITE] as f64);
        let bb = bn * (bn - 1.0).max(0.0);
        let ww = wn * (wn - 1.0).max(0.0);
        let mut push = |rate: f64, delta: [i64; 2]| {
            if rate > 0.0 {
                out.push(Channel { rate, effect: Effect::Local(delta) });
            }
        };
        // Branching: black offspring at b, white offspring of black at b̃-b,
        // white offspring of white at b̃.
        push(p.branching * bn, unit(&[(BLACK, 1)]));
        push((up.branching - p.branching) * bn, unit(&[(WHITE, 1)]));
        push(up.branching * wn, unit(&[(WHITE, 1)]));
        // Death: black dies at d̃ and turns white at d-d̃; white dies at d̃.
        push(up.death * bn, unit(&[(BLACK, -1)]));
        push((p.death - up.death) * bn, unit(&[(BLACK, -1), (WHITE, 1)]));
        push(up.death * wn, unit(&[(WHITE, -1)]));
        // Black pairs.
        push((1.0 - theta) * p.coalescence * bb, unit(&[(BLACK, -1), (WHITE, 1)]));
        push((1.0 - theta) * p.annihilation * bb, unit(&[(BLACK, -2), (WHITE, 2)]));
        push(theta * p.coalescence * bb, unit(&[(BLACK, -1)]));
        push(theta * p.annihilation * bb, unit(&[(BLACK, -2), (WHITE, 1)]));
        // Mixed and white pairs lose the white particle.
        push(2.0 * up.coalescence * bn * wn, unit(&[(WHITE, -1)]));
        push(up.coalescence * ww, unit(&[(WHITE, -1)]));
        for (k, m) in [(BLACK, bn), (WHITE, wn)] {
            if m > 0.0 {
                out.push(Channel {
                    rate: exit * m,
                    effect: Effect::Jump {
                        source: unit(&[(k, -1)]),
                        target: unit(&[(k, 1)]),
                    },
                });
            }
        }
    }
}

/// Couples `X` (`p`) below `X̃` (`(q,0,b̃,c̃,d̃)`) with `X_0 = x0 ≤ x̃0`.
///
/// Requires `b ≤ b̃`, `c̃ ≤ a+c` and `d̃ ≤ d`; the mixing weight is
/// `θ = c̃/(a+c)`. Returns `(X, X̃)` at each grid time as black and
/// black+white.
pub fn comparison_simulate<G: Rng + ?Sized>(
    x0: &OccupancyState,
    upper_x0: &OccupancyState,
    p: &RateParams,
    upper: &RateParams,
    lat: &Lattice,
    t_grid: &[f64],
    rng: &mut G,
) -> Result<Vec<BiState>> {
    p.validate()?;
    upper.validate()?;
    check_grid(t_grid)?;
    check_len(lat, x0.len())?;
    check_len(lat, upper_x0.len())?;
    if upper.annihilation != 0.0 {
        return Err(Error::ComparisonViolated("upper process must be annihilation-free"));
    }
    if p.branching > upper.branching {
        return Err(Error::ComparisonViolated("need b ≤ b̃"));
    }
    if upper.coalescence > p.pair_rate() {
        return Err(Error::ComparisonViolated("need c̃ ≤ a + c"));
    }
    if upper.death > p.death {
        return Err(Error::ComparisonViolated("need d̃ ≤ d"));
    }
    if !x0.le(upper_x0) {
        return Err(Error::ComparisonViolated("need x0 ≤ x̃0"));
    }
    let theta = if p.pair_rate() > 0.0 {
        upper.coalescence / p.pair_rate()
    } else {
        0.0
    };
    let counts = (0..lat.len()).map(|i| [x0.get(i), upper_x0.get(i) - x0.get(i)]).collect();
    let rules = ComparisonRules {
        p: *p,
        upper: *upper,
        theta,
    };
    let raw = Engine::new(lat, rules, counts).run(t_grid, rng, |_| Ok(()))?;
    Ok(raw
        .iter()
        .map(|c| BiState {
            black: column(c, BLACK),
            white: column(c, WHITE),
        })
        .collect())
}

struct DominationRules {
    p: RateParams,
}

impl LocalRules<2> for DominationRules {
    fn channels(&self, n: &[u64; 2], exit: f64, out: &mut Vec<Channel<2>>) {
        let p = &self.p;
        let (bn, wn) = (n[BLACK] as f64, n[WHITE] as f64);
        let bb = bn * (bn - 1.0).max(0.0);
        let mut push = |rate: f64, delta: [i64; 2]| {
            if rate > 0.0 {
                out.push(Channel { rate, effect: Effect::Local(delta) });
            }
        };
        push(p.branching * bn, unit(&[(BLACK, 1)]));
        push(p.branching * wn, unit(&[(WHITE, 1)]));
        // Black losses leave white particles behind.
        push(p.death * bn, unit(&[(BLACK, -1), (WHITE, 1)]));
        push(p.coalescence * bb, unit(&[(BLACK, -1), (WHITE, 1)]));
        push(p.annihilation * bb, unit(&[(BLACK, -2), (WHITE, 2)]));
        if bn > 0.0 {
            // A black jump leaves a white particle at the source.
            out.push(Channel {
                rate: exit * bn,
                effect: Effect::Jump {
                    source: unit(&[(BLACK, -1), (WHITE, 1)]),
                    target: unit(&[(BLACK, 1)]),
                },
            });
        }
        if wn > 0.0 {
            // White particles do not move; they give birth at the target.
            out.push(Channel {
                rate: exit * wn,
                effect: Effect::Jump {
                    source: [0, 0],
                    target: unit(&[(WHITE, 1)]),
                },
            });
        }
    }
}

/// Runs `X` together with a dominating pure-birth system `V ≥ X`.
///
/// `V` gains a particle at `j` at rate `q(i,j)V(i)` and at `i` at rate
/// `b·V(i)`, and never loses one. Returns `X` as black and `V` as
/// black+white. Every event is checked for `V` nondecreasing and `X ≤ V`.
pub fn pure_birth_domination<G: Rng + ?Sized>(
    x0: &OccupancyState,
    p: &RateParams,
    lat: &Lattice,
    t_grid: &[f64],
    rng: &mut G,
) -> Result<Vec<BiState>> {
    p.validate()?;
    check_grid(t_grid)?;
    check_len(lat, x0.len())?;
    let counts: Vec<[u64; 2]> = x0.counts().iter().map(|&n| [n, 0]).collect();
    let mut last_total: Vec<u64> = x0.counts().to_vec();
    let mut engine = Engine::new(lat, DominationRules { p: *p }, counts);
    let raw = engine.run(t_grid, rng, |c| {
        for (site, (cell, prev)) in c.iter().zip(last_total.iter_mut()).enumerate() {
            let v = cell[BLACK] + cell[WHITE];
            if v < *prev || cell[BLACK] > v {
                return Err(Error::DominationViolated { site });
            }
            *prev = v;
        }
        Ok(())
    })?;
    Ok(raw
        .iter()
        .map(|c| BiState {
            black: column(c, BLACK),
            white: column(c, WHITE),
        })
        .collect())
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
    fn diagonal_start_stays_diagonal() {
        let lat = Lattice::torus_1d(3).unwrap();
        let p = rates(1.0, 1.0, 1.0, 0.5);
        let init = TriState {
            y01: OccupancyState::zeros(3),
            y11: OccupancyState::new(vec![3, 1, 2]),
            y10: OccupancyState::zeros(3),
        };
        for rep in 0..200 {
            let out = standard_coupling_simulate(&init, &p, default_coupling_rate(&p), &lat, &[0.2, 1.0], &mut stream_rng(1, 0, rep)).unwrap();
            for st in out {
                assert_eq!(st.left(), st.right());
                assert!(st.y01.is_empty() && st.y10.is_empty());
            }
        }
    }

    #[test]
    fn no_annihilation_keeps_order() {
        let lat = Lattice::torus_1d(3).unwrap();
        let p = rates(0.0, 1.0, 1.0, 0.5);
        let init = TriState {
            y01: OccupancyState::new(vec![2, 0, 1]),
            y11: OccupancyState::new(vec![1, 1, 0]),
            y10: OccupancyState::zeros(3),
        };
        for rep in 0..200 {
            let out = standard_coupling_simulate(&init, &p, default_coupling_rate(&p), &lat, &[0.3, 1.5], &mut stream_rng(2, 0, rep)).unwrap();
            for st in out {
                assert!(st.right().le(&st.left()));
                assert!(st.y10.is_empty());
            }
        }
    }

    #[test]
    fn comparison_rejects_bad_parameters() {
        let lat = Lattice::torus_1d(2).unwrap();
        let x = OccupancyState::new(vec![1, 1]);
        let p = rates(1.0, 1.0, 1.0, 1.0);
        let mut rng = stream_rng(0, 0, 0);
        assert!(comparison_simulate(&x, &x, &p, &rates(0.0, 0.5, 2.0, 1.0), &lat, &[1.0], &mut rng).is_err());
        assert!(comparison_simulate(&x, &x, &p, &rates(0.0, 1.0, 2.5, 1.0), &lat, &[1.0], &mut rng).is_err());
        assert!(comparison_simulate(&x, &x, &p, &rates(0.0, 1.0, 2.0, 1.5), &lat, &[1.0], &mut rng).is_err());
        assert!(comparison_simulate(&x, &x, &p, &rates(0.5, 1.0, 1.0, 1.0), &lat, &[1.0], &mut rng).is_err());
        let bigger = OccupancyState::new(vec![2, 0]);
        assert!(comparison_simulate(&bigger, &x, &p, &rates(0.0, 1.0, 2.0, 1.0), &lat, &[1.0], &mut rng).is_err());
    }

    #[test]
    fn comparison_identical_without_annihilation() {
        let lat = Lattice::torus_1d(3).unwrap();
        let p = rates(0.0, 1.2, 0.7, 0.4);
        let x = OccupancyState::new(vec![2, 1, 3]);
        for rep in 0..200 {
            let out = comparison_simulate(&x, &x, &p, &p, &lat, &[0.5, 2.0], &mut stream_rng(3, 0, rep)).unwrap();
            for st in out {
                assert!(st.white.is_empty());
            }
        }
    }

    #[test]
    fn comparison_black_mean_matches_plain_process() {
        // Pure death plus pair removal on one site: compare the black
        // marginal mean with the plain simulator.
        let lat = Lattice::custom(1, &[]).unwrap();
        let p = rates(1.0, 1.0, 1.0, 1.0);
        let upper = rates(0.0, 1.0, 2.0, 1.0);
        let x = OccupancyState::point(1, 0, 4);
        let (mut black, mut plain) = (EnsembleStats::new(), EnsembleStats::new());
        for rep in 0..20_000 {
            let out = comparison_simulate(&x, &x, &p, &upper, &lat, &[0.5], &mut stream_rng(4, 0, rep)).unwrap();
            black.push(out[0].black.total() as f64);
            let y = crate::branco::simulate(&x, &p, &lat, &[0.5], &mut stream_rng(4, 1, rep)).unwrap();
            plain.push(y[0].total() as f64);
        }
        let se = libm::sqrt(black.standard_error().powi(2) + plain.standard_error().powi(2));
        assert!((black.mean() - plain.mean()).abs() < 4.0 * se);
    }

    #[test]
    fn domination_without_birth_or_motion() {
        let lat = Lattice::custom(2, &[]).unwrap();
        let p = rates(0.0, 0.0, 0.0, 1.0);
        let x = OccupancyState::new(vec![3, 2]);
        let out = pure_birth_domination(&x, &p, &lat, &[0.5, 3.0], &mut stream_rng(5, 0, 0)).unwrap();
        for st in &out {
            assert_eq!(st.total(), x);
        }
    }

    #[test]
    fn yule_mean() {
        let lat = Lattice::custom(1, &[]).unwrap();
        let p = rates(0.0, 1.0, 0.0, 0.0);
        let t = 0.8;
        let mut stats = EnsembleStats::new();
        for rep in 0..20_000 {
            let out = pure_birth_domination(&OccupancyState::point(1, 0, 1), &p, &lat, &[t], &mut stream_rng(6, 0, rep)).unwrap();
            stats.push(out[0].total().total() as f64);
        }
        assert!((stats.mean() - libm::exp(t)).abs() < 4.0 * stats.standard_error());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn comparison_dominates(
            x in prop::collection::vec(0u64..5, 3),
            extra in prop::collection::vec(0u64..3, 3),
            a in 0.0f64..2.0, b in 0.0f64..2.0, c in 0.0f64..2.0, d in 0.0f64..2.0,
            db in 0.0f64..1.0, frac in 0.0f64..=1.0, dfrac in 0.0f64..=1.0,
            seed in any::<u64>(),
        ) {
            prop_assume!(a + c > 1e-3);
            let lat = Lattice::torus_1d(3).unwrap();
            let p = rates(a, b, c, d);
            let upper = rates(0.0, b + db, frac * (a + c), dfrac * d);
            let lo = OccupancyState::new(x.clone());
            let hi = OccupancyState::new(x.iter().zip(&extra).map(|(u, v)| u + v).collect());
            let out = comparison_simulate(&lo, &hi, &p, &upper, &lat, &[0.2, 0.6], &mut stream_rng(seed, 0, 0)).unwrap();
            for st in out {
                prop_assert!(st.black.le(&st.total()));
            }
        }

        #[test]
        fn domination_holds(
            x in prop::collection::vec(0u64..5, 4),
            a in 0.0f64..2.0, b in 0.0f64..1.0, c in 0.0f64..2.0, d in 0.0f64..2.0,
            seed in any::<u64>(),
        ) {
            let lat = Lattice::torus_1d(4).unwrap();
            let out = pure_birth_domination(&OccupancyState::new(x.clone()), &rates(a, b, c, d), &lat, &[0.2, 0.5], &mut stream_rng(seed, 0, 0)).unwrap();
            let mut prev = OccupancyState::new(x);
            for st in out {
                let v = st.total();
                prop_assert!(st.black.le(&v));
                prop_assert!(prev.le(&v));
                prev = v;
            }
        }
    }
}
