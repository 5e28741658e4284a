//! Special functions: log-gamma, regularized incomplete gamma, and the
//! standard normal distribution function with its inverse.

use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_TERMS: usize = 100_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for positive arguments (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        LN_SQRT_2PI + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

fn check_gamma_args(shape: f64, cut: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::domain(alloc::format!(
            "incomplete gamma shape must be positive, got {shape}"
        )));
    }
    if !(cut >= 0.0) {
        return Err(Error::domain(alloc::format!(
            "incomplete gamma cut must be nonnegative, got {cut}"
        )));
    }
    Ok(())
}

// exp(-x + a ln x - ln Γ(a))
fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

// Lower series: P(a, x) for x < a + 1.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_TERMS {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * gamma_prefactor(a, x)
}

// Upper continued fraction (modified Lentz): Q(a, x) for x >= a + 1.
fn upper_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    gamma_prefactor(a, x) * h
}

/// Γ(shape, cut) / Γ(shape), the upper regularized incomplete gamma function.
///
/// At integer `shape = g + 1` this is the Poisson(cut) distribution function
/// evaluated at `g`; for real shapes it is the continuous Poisson CDF.
pub fn regularized_upper_gamma(shape: f64, cut: f64) -> Result<f64> {
    check_gamma_args(shape, cut)?;
    if cut == 0.0 {
        return Ok(1.0);
    }
    if cut.is_infinite() {
        return Ok(0.0);
    }
    let q = if cut < shape + 1.0 {
        1.0 - lower_series(shape, cut)
    } else {
        upper_fraction(shape, cut)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// γ(shape, cut) / Γ(shape), the lower regularized incomplete gamma function.
pub fn regularized_lower_gamma(shape: f64, cut: f64) -> Result<f64> {
    check_gamma_args(shape, cut)?;
    if cut == 0.0 {
        return Ok(0.0);
    }
    if cut.is_infinite() {
        return Ok(1.0);
    }
    let p = if cut < shape + 1.0 {
        lower_series(shape, cut)
    } else {
        1.0 - upper_fraction(shape, cut)
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

/// Log of the standard normal density.
pub fn normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal distribution function Φ(z).
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal survival function 1 − Φ(z), accurate in the upper tail.
pub fn normal_sf(z: f64) -> f64 {
    normal_cdf(-z)
}

/// ln Φ(z), finite for every finite `z` including far lower tails where
/// Φ(z) itself underflows.
pub fn log_normal_cdf(z: f64) -> f64 {
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z > 5.0 {
        return (-normal_cdf(-z)).ln_1p();
    }
    if z > -30.0 {
        return normal_cdf(z).ln();
    }
    // asymptotic Mills-ratio expansion
    let z2 = z * z;
    let inv = 1.0 / z2;
    let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
    -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
}

/// ln(1 − Φ(z)).
pub fn log_normal_sf(z: f64) -> f64 {
    log_normal_cdf(-z)
}

/// Inverse of the standard normal distribution function (Wichura AS 241).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(alloc::format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    Ok(ppnd16(p))
}

fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// log(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

/// log Σ exp(x_i).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;
    use std::vec::Vec;

    fn poisson_cdf(g: u32, lambda: f64) -> f64 {
        let mut term = (-lambda).exp();
        let mut sum = term;
        for j in 1..=g {
            term *= lambda / j as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn ln_gamma_integers() {
        let mut fact = 1.0f64;
        for n in 1..30 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn upper_gamma_trivial_cases() {
        assert_eq!(regularized_upper_gamma(1.0, 0.0).unwrap(), 1.0);
        for lam in [0.1, 1.0, 3.5, 20.0] {
            let q = regularized_upper_gamma(1.0, lam).unwrap();
            assert!((q - (-lam).exp()).abs() < 1e-14);
        }
        assert!(regularized_upper_gamma(0.0, 1.0).is_err());
        assert!(regularized_upper_gamma(-2.0, 1.0).is_err());
    }

    #[test]
    fn upper_gamma_matches_poisson_cdf() {
        for lam in [0.5, 1.0, 5.0, 20.0] {
            for g in 0..=50u32 {
                let q = regularized_upper_gamma(g as f64 + 1.0, lam).unwrap();
                let p = poisson_cdf(g, lam);
                assert!((q - p).abs() < 1e-10, "g={g} lam={lam}: {q} vs {p}");
            }
        }
    }

    #[test]
    fn upper_gamma_decreasing_in_cut() {
        let shape = 3.7;
        let vals: Vec<f64> = (0..200)
            .map(|i| regularized_upper_gamma(shape, i as f64 * 0.1).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn lower_and_upper_complement() {
        for (a, x) in [(0.3, 0.1), (2.0, 5.0), (10.5, 3.0), (50.0, 55.0)] {
            let p = regularized_lower_gamma(a, x).unwrap();
            let q = regularized_upper_gamma(a, x).unwrap();
            assert!((p + q - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        let l = log_normal_cdf(-40.0);
        assert!(l.is_finite() && l < -800.0 && l > -810.0);
        // continuity of the log form across the switch point
        let a = log_normal_cdf(-29.999_999);
        let b = log_normal_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
    }

    #[test]
    fn normal_quantile_values() {
        let q = normal_quantile(0.975).unwrap();
        assert!((q - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(-0.1).is_err());
    }

    #[test]
    fn normal_quantile_bisection_oracle() {
        // independent oracle: bisection on the CDF
        let mut lo = -10.0;
        let mut hi = 10.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((0.5 * (lo + hi) - 1.959964).abs() < 1e-6);
        assert!((normal_quantile(0.975).unwrap() - 0.5 * (lo + hi)).abs() < 1e-12);
    }

    #[test]
    fn normal_round_trip() {
        let mut ps: Vec<f64> = (1..1000).map(|i| i as f64 / 1000.0).collect();
        ps.extend([
            1e-15,
            1e-12,
            1e-8,
            1e-4,
            1.0 - 1e-4,
            1.0 - 1e-8,
            1.0 - 1e-12,
            1.0 - 1e-15,
        ]);
        for p in ps {
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn log_sum_exp_stable() {
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(&v) - (-1000.0 + LN_2)).abs() < 1e-12);
        assert!((log_add_exp(-1000.0, -1000.0) - (-1000.0 + LN_2)).abs() < 1e-12);
    }
}
