//! Mergeable running statistics (count, mean, sum of squared deviations).

/// Welford-style accumulator that can be merged with the pairwise update of
/// Chan, Golub and LeVeque.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnsembleStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl EnsembleStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (value - self.mean);
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * n_b / n;
        self.m2 += other.m2 + delta * delta * n_a * n_b / n;
        self.count += other.count;
    }

    pub fn merged(mut self, other: &EnsembleStats) -> Self {
        self.merge(other);
        self
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        libm::sqrt(self.variance() / self.count as f64)
    }

    /// Standard error relative to the magnitude of the mean.
    pub fn relative_standard_error(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            self.standard_error() / libm::fabs(self.mean)
        }
    }
}

impl Extend<f64> for EnsembleStats {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.push(v);
        }
    }
}

impl FromIterator<f64> for EnsembleStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn small_sample() {
        let s: EnsembleStats = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(s.count(), 4);
        assert_eq!(s.mean(), 2.5);
        assert!((s.variance() - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.standard_error() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_and_singleton() {
        let s = EnsembleStats::new();
        assert_eq!(s.standard_error(), 0.0);
        let one: EnsembleStats = [3.0].into_iter().collect();
        assert_eq!(one.variance(), 0.0);
        assert_eq!(s.merged(&one), one);
    }

    proptest! {
        #[test]
        fn split_merge_matches_single_pass(
            xs in prop::collection::vec(-1e3f64..1e3, 2..200),
            split in 0usize..200,
        ) {
            let split = split % xs.len();
            let whole: EnsembleStats = xs.iter().copied().collect();
            let left: EnsembleStats = xs[..split].iter().copied().collect();
            let right: EnsembleStats = xs[split..].iter().copied().collect();
            let merged = left.merged(&right);
            prop_assert_eq!(merged.count(), whole.count());
            prop_assert!(rel_close(merged.mean(), whole.mean()));
            prop_assert!(rel_close(merged.variance(), whole.variance()));
        }

        #[test]
        fn merge_is_commutative(
            a in prop::collection::vec(-10f64..10.0, 0..50),
            b in prop::collection::vec(-10f64..10.0, 0..50),
        ) {
            let sa: EnsembleStats = a.iter().copied().collect();
            let sb: EnsembleStats = b.iter().copied().collect();
            let ab = sa.merged(&sb);
            let ba = sb.merged(&sa);
            prop_assert!(rel_close(ab.mean(), ba.mean()));
            prop_assert!(rel_close(ab.m2(), ba.m2()));
        }
    }
}
