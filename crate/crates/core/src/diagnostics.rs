//! Kolmogorov-Smirnov statistics used by the sampler checks.

use alloc::vec::Vec;

/// Statistic and asymptotic p-value of a KS test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// P(K > t) for the Kolmogorov distribution.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if !(t > 0.0) {
        return 1.0;
    }
    if t < 0.2 {
        // the alternating series converges slowly here and the tail is 1 to
        // double precision
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = libm::exp(-2.0 * kf * kf * t * t);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, n_eff: f64) -> f64 {
    let s = libm::sqrt(n_eff);
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample test of `samples` against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let v = sorted(samples);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: p_value(d, n),
    }
}

/// Two-sample test. Ties are handled by comparing the empirical CDFs only
/// after every copy of a value has been consumed, so discrete data are
/// allowed (the p-value is then conservative).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let n_eff = (na * nb) as f64 / (na + nb) as f64;
    KsResult {
        statistic: d,
        p_value: p_value(d, n_eff),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sampling::sample_standard_normal;
    use crate::special::normal_cdf;

    #[test]
    fn kolmogorov_reference_values() {
        // P(K > 1.36) ≈ 0.049, P(K > 1.63) ≈ 0.0098
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.0100).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(5.0) < 1e-20);
    }

    #[test]
    fn one_sample_normal() {
        let mut rng = RngStream::new(1, 0);
        let xs: Vec<f64> = (0..20_000)
            .map(|_| sample_standard_normal(&mut rng))
            .collect();
        let r = ks_one_sample(&xs, normal_cdf);
        assert!(r.statistic < 0.015 && r.p_value > 0.001, "{r:?}");
        let shifted = ks_one_sample(&xs, |x| normal_cdf(x - 0.1));
        assert!(shifted.p_value < 1e-6);
    }

    #[test]
    fn two_sample_identical_and_shifted() {
        let mut rng = RngStream::new(2, 0);
        let a: Vec<f64> = (0..5000)
            .map(|_| sample_standard_normal(&mut rng))
            .collect();
        let b: Vec<f64> = (0..5000)
            .map(|_| sample_standard_normal(&mut rng))
            .collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        assert!(ks_two_sample(&a, &b).p_value > 0.001);
        let c: Vec<f64> = b.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
    }

    #[test]
    fn two_sample_ties() {
        let a = [1.0, 1.0, 2.0, 2.0];
        let b = [1.0, 2.0, 2.0, 2.0];
        assert!((ks_two_sample(&a, &b).statistic - 0.25).abs() < 1e-15);
    }
}
