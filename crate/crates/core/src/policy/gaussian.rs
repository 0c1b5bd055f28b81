//! Diagonal Gaussian with state-independent log standard deviation.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

pub fn log_prob(action: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    action
        .iter()
        .zip(mean)
        .zip(log_std)
        .map(|((a, m), s)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| 0.5 + HALF_LN_2PI + s).sum()
}

/// Per-dimension density, used to check normalization.
pub fn density_1d(x: f64, mean: f64, log_std: f64) -> f64 {
    let s = log_std.exp();
    (-(x - mean).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

pub fn sample(rng: &mut Rng, mean: &[f64], log_std: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(log_std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            m + s.exp() * z
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_closed_form_density() {
        let (a, m, s) = ([0.3, -1.2], [0.1, -1.0], [0.2f64, -0.5f64]);
        let expect: f64 = (0..2).map(|i| density_1d(a[i], m[i], s[i]).ln()).sum();
        assert!((log_prob(&a, &m, &s) - expect).abs() < 1e-13);
    }

    #[test]
    fn integrates_to_one() {
        let (m, s) = (0.4, (0.7f64).ln());
        let h = 1e-3;
        let total: f64 = (-10_000..=10_000)
            .map(|k| log_prob(&[m + k as f64 * h], &[m], &[s]).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}
