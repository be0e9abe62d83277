//! Composite quadrature on uniform grids.

use alloc::vec;
use alloc::vec::Vec;

/// Composite Simpson rule for samples `values[k] = f(k * step)`.
///
/// An odd number of panels is handled by closing the last three panels with
/// Simpson's 3/8 rule. One panel falls back to the trapezoid rule.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let panels = values.len().saturating_sub(1);
    match panels {
        0 => 0.0,
        1 => 0.5 * step * (values[0] + values[1]),
        2 => step / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        3 => three_eighths(values, step),
        _ if panels % 2 == 0 => simpson_even(values, step),
        _ => {
            let split = panels - 3;
            simpson_even(&values[..=split], step) + three_eighths(&values[split..], step)
        }
    }
}

/// Weights `w` with `simpson(values, step) = Σ_k w[k]·values[k]`.
pub fn simpson_weights(panels: usize, step: f64) -> Vec<f64> {
    let mut w = vec![0.0; panels + 1];
    let mut unit = vec![0.0; panels + 1];
    for k in 0..=panels {
        unit[k] = 1.0;
        w[k] = simpson(&unit, step);
        unit[k] = 0.0;
    }
    w
}

fn simpson_even(values: &[f64], step: f64) -> f64 {
    let last = values.len() - 1;
    let mut acc = values[0] + values[last];
    for (k, v) in values.iter().enumerate().take(last).skip(1) {
        acc += if k % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

fn three_eighths(values: &[f64], step: f64) -> f64 {
    3.0 * step / 8.0 * (values[0] + 3.0 * values[1] + 3.0 * values[2] + values[3])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> (Vec<f64>, f64) {
        let h = (b - a) / panels as f64;
        ((0..=panels).map(|k| f(a + k as f64 * h)).collect(), h)
    }

    #[test]
    fn exact_for_cubics_any_panel_count() {
        let f = |x: f64| 2.0 * x * x * x - x * x + 3.0;
        let exact = 0.5 * 16.0 - 8.0 / 3.0 + 6.0;
        for panels in 2..12 {
            let (v, h) = sample(f, 0.0, 2.0, panels);
            assert!((simpson(&v, h) - exact).abs() < 1e-12, "panels {panels}");
        }
    }

    #[test]
    fn converges_for_exponential() {
        let (v, h) = sample(libm::exp, 0.0, 1.0, 64);
        assert!((simpson(&v, h) - (core::f64::consts::E - 1.0)).abs() < 1e-9);
        assert_eq!(simpson(&[1.0], 0.1), 0.0);
    }

    #[test]
    fn weights_reproduce_rule() {
        for panels in 0..9 {
            let (v, h) = sample(|x| libm::sin(3.0 * x), 0.0, 1.0, panels.max(1));
            let v = &v[..=panels.min(v.len() - 1)];
            let w = simpson_weights(v.len() - 1, h);
            let dot: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
            assert!((dot - simpson(v, h)).abs() < 1e-14);
        }
    }
}
