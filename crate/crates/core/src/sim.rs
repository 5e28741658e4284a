//! The two simulation designs and their true latent quantile curves.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::quantile::{solve_quantile, ConditionalMixture};
use crate::rng::RngStream;
use crate::root::{brent, RootOptions};
use crate::sampling::{sample_standard_normal, sample_truncated_normal, Interval};
use crate::special::{log_normal_sf, normal_ln_pdf, regularized_upper_gamma};

/// Stream id reserved for data generation.
pub const SIM_STREAM: u64 = 0x5157;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "1")]
    PoissonBernoulli,
    #[serde(rename = "2")]
    TruncatedNormal,
}

impl Setting {
    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Setting::PoissonBernoulli),
            2 => Ok(Setting::TruncatedNormal),
            _ => Err(Error::InvalidData(alloc::format!(
                "unknown setting {k}; use 1 or 2"
            ))),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            Setting::PoissonBernoulli => 1,
            Setting::TruncatedNormal => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub setting: Setting,
    pub n: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn generate(&self) -> Result<SimData> {
        match self.setting {
            Setting::PoissonBernoulli => gen_setting1(self.n, self.seed),
            Setting::TruncatedNormal => gen_setting2(self.n, self.seed),
        }
    }
}

/// Generated data plus the mixture component of each row, and the latent y*
/// where the design has one.
#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub latent: Option<Vec<f64>>,
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCurve {
    pub tau: f64,
    pub grid: Vec<f64>,
    pub y_star: Vec<f64>,
}

pub const SETTING1_WEIGHTS: [f64; 4] = [0.2, 0.3, 0.3, 0.2];
/// (intercept, slope); the first two are Poisson log-means, the last two
/// Bernoulli logits.
pub const SETTING1_COEF: [(f64, f64); 4] = [(0.8, 0.4), (2.0, 0.3), (-1.0, 0.3), (-1.0, -0.1)];

pub const SETTING2_WEIGHTS: [f64; 5] = [0.4, 0.1, 0.2, 0.15, 0.15];
/// (μ_y*, μ_x)
pub const SETTING2_MEANS: [(f64, f64); 5] = [
    (5.0, 1.0),
    (7.5, 5.0),
    (10.0, 8.0),
    (12.5, 10.0),
    (15.0, 8.0),
];
/// (var y*, cov, var x)
pub const SETTING2_COV: [(f64, f64, f64); 5] = [
    (1.0, 0.6, 2.0),
    (1.0, 0.6, 2.0),
    (1.0, 0.4, 2.0),
    (1.0, 0.4, 3.0),
    (1.0, -0.3, 1.0),
];

fn check_n(n: usize) -> Result<()> {
    if n < 10 {
        return Err(Error::InvalidData(alloc::format!(
            "simulation needs N >= 10, got {n}"
        )));
    }
    Ok(())
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Four-component mixture: two Poisson and two Bernoulli regressions on
/// x ~ N(0, 1).
pub fn gen_setting1(n: usize, seed: u64) -> Result<SimData> {
    check_n(n)?;
    let mut rng = RngStream::new(seed, SIM_STREAM);
    let pick = WeightedIndex::new(SETTING1_WEIGHTS).expect("positive weights");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(&mut rng);
        let xi = sample_standard_normal(&mut rng);
        let (b0, b1) = SETTING1_COEF[k];
        let eta = b0 + b1 * xi;
        let yi = if k < 2 {
            Poisson::new(eta.exp())
                .map_err(|e| Error::Numerical(alloc::format!("{e}")))?
                .sample(&mut rng) as u64
        } else {
            u64::from(rng.random::<f64>() < logistic(eta))
        };
        x.push(xi);
        y.push(yi);
        components.push(k);
    }
    Ok(SimData {
        data: Dataset::with_default_names(y, DMatrix::from_column_slice(n, 1, &x))?,
        latent: None,
        components,
    })
}

/// Five-component bivariate normal mixture truncated to y* > −1, with
/// y = ⌈y*⌉.
pub fn gen_setting2(n: usize, seed: u64) -> Result<SimData> {
    check_n(n)?;
    let mut rng = RngStream::new(seed, SIM_STREAM);
    let support = Interval::new(-1.0, f64::INFINITY)?;
    let pick = WeightedIndex::new(SETTING2_WEIGHTS).expect("positive weights");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut components = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(&mut rng);
        let (my, mx) = SETTING2_MEANS[k];
        let (vy, cxy, vx) = SETTING2_COV[k];
        // y* from its truncated marginal, then x | y*
        let ys = sample_truncated_normal(my, vy.sqrt(), &support, &mut rng)?;
        let cm = mx + cxy / vy * (ys - my);
        let cv = vx - cxy * cxy / vy;
        let xi = cm + cv.sqrt() * sample_standard_normal(&mut rng);
        latent.push(ys);
        y.push(ys.ceil().max(0.0) as u64);
        x.push(xi);
        components.push(k);
    }
    Ok(SimData {
        data: Dataset::with_default_names(y, DMatrix::from_column_slice(n, 1, &x))?,
        latent: Some(latent),
        components,
    })
}

/// y* | x in Setting 2 as a truncated normal mixture.
pub fn setting2_conditional(x: f64) -> Result<ConditionalMixture> {
    let mut log_w = Vec::with_capacity(5);
    let mut means = Vec::with_capacity(5);
    let mut sds = Vec::with_capacity(5);
    for k in 0..5 {
        let (my, mx) = SETTING2_MEANS[k];
        let (vy, cxy, vx) = SETTING2_COV[k];
        let m = my + cxy / vx * (x - mx);
        let s = (vy - cxy * cxy / vx).sqrt();
        // w_k N(x; μ_x, σ²_x) P(y* > −1 | x) / P(y* > −1)
        let lw = SETTING2_WEIGHTS[k].ln() + normal_ln_pdf((x - mx) / vx.sqrt()) - 0.5 * vx.ln()
            + log_normal_sf((-1.0 - m) / s)
            - log_normal_sf((-1.0 - my) / vy.sqrt());
        log_w.push(lw);
        means.push(m);
        sds.push(s);
    }
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().sum();
    ConditionalMixture::new(w.into_iter().map(|v| v / total).collect(), means, sds)
}

// Linear interpolation of a Bernoulli(p) CDF across (g − 1, g].
fn bernoulli_interpolated_cdf(p: f64, y: f64) -> f64 {
    if y <= -1.0 {
        0.0
    } else if y <= 0.0 {
        (y + 1.0) * (1.0 - p)
    } else if y <= 1.0 {
        (1.0 - p) + y * p
    } else {
        1.0
    }
}

/// F(y* | x) in Setting 1: continuous Poisson CDFs for the Poisson
/// components and interpolated Bernoulli CDFs for the others.
pub fn setting1_cdf(x: f64, y: f64) -> Result<f64> {
    if y <= -1.0 {
        return Ok(0.0);
    }
    let mut f = 0.0;
    for k in 0..4 {
        let (b0, b1) = SETTING1_COEF[k];
        let eta = b0 + b1 * x;
        f += SETTING1_WEIGHTS[k]
            * if k < 2 {
                regularized_upper_gamma(y + 1.0, eta.exp())?
            } else {
                bernoulli_interpolated_cdf(logistic(eta), y)
            };
    }
    Ok(f)
}

fn setting1_quantile(x: f64, tau: f64) -> Result<f64> {
    let f = |y: f64| setting1_cdf(x, y).map(|v| v - tau).unwrap_or(f64::NAN);
    let lo = -1.0;
    let mut hi = (2.0 + 0.3 * x).exp() * 2.0 + 50.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::Bracketing {
                lower: lo,
                upper: hi,
            });
        }
    }
    brent(
        f,
        lo,
        hi,
        &RootOptions {
            xtol: 1e-12,
            ftol: 1e-12,
            max_iter: 300,
        },
    )
}

/// True latent τ-quantile curve on `grid`.
pub fn true_quantiles(setting: Setting, tau: f64, grid: &[f64]) -> Result<TruthCurve> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(alloc::format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let y_star = grid
        .iter()
        .map(|&x| match setting {
            Setting::PoissonBernoulli => setting1_quantile(x, tau),
            Setting::TruncatedNormal => solve_quantile(&setting2_conditional(x)?, tau, 1e-12),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthCurve {
        tau,
        grid: grid.to_vec(),
        y_star,
    })
}

/// Equally spaced grid between the 2.5% and 97.5% sample quantiles of `x`.
pub fn trimmed_grid(x: &[f64], points: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (s.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(s.len() - 1);
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    let (a, b) = (q(0.025), q(0.975));
    if points < 2 {
        return vec![a];
    }
    (0..points)
        .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::conditional_cdf;
    use crate::special::normal_quantile;

    #[test]
    fn setting1_proportions_and_means() {
        let s = gen_setting1(100_000, 1).unwrap();
        let mut c = [0usize; 4];
        s.components.iter().for_each(|&k| c[k] += 1);
        for k in 0..4 {
            assert!((c[k] as f64 / 1e5 - SETTING1_WEIGHTS[k]).abs() < 0.01);
        }
        // component 2 near x = 0
        let ys: Vec<f64> = (0..100_000)
            .filter(|&i| s.components[i] == 1 && s.data.x()[(i, 0)].abs() < 0.05)
            .map(|i| s.data.y()[i] as f64)
            .collect();
        let m = ys.iter().sum::<f64>() / ys.len() as f64;
        let se = (7.389f64 / ys.len() as f64).sqrt();
        assert!(
            (m - 2.0f64.exp()).abs() < 4.0 * se + 0.1,
            "{m} (n = {})",
            ys.len()
        );
        assert!((0..100_000).all(|i| s.components[i] < 2 || s.data.y()[i] <= 1));
    }

    #[test]
    fn setting2_rounding_and_mean() {
        let s = gen_setting2(100_000, 2).unwrap();
        let lat = s.latent.as_ref().unwrap();
        for (y, ys) in s.data.y().iter().zip(lat) {
            let g = *y as f64;
            assert!(g - 1.0 < *ys && *ys <= g);
        }
        let mean_x = s.data.x().column(0).mean();
        let target: f64 = (0..5)
            .map(|k| SETTING2_WEIGHTS[k] * SETTING2_MEANS[k].1)
            .sum();
        // var of the mixture in x is about 12; SE about 0.011
        assert!((mean_x - target).abs() < 0.05, "{mean_x} vs {target}");
        let (a, b) = (gen_setting2(100, 2).unwrap(), gen_setting2(100, 2).unwrap());
        assert_eq!(a.data.y(), b.data.y());
        assert_eq!(a.latent, b.latent);
        assert!(gen_setting2(5, 0).is_err());
    }

    #[test]
    fn setting2_single_component_region() {
        // left of component 1 the others carry < 1e-4 of the weight
        let x = -1.0;
        let (my, mx) = SETTING2_MEANS[0];
        let (vy, c, vx) = SETTING2_COV[0];
        let m = my + c / vx * (x - mx);
        let s = (vy - c * c / vx).sqrt();
        for tau in [0.1, 0.5, 0.9] {
            let t = true_quantiles(Setting::TruncatedNormal, tau, &[x]).unwrap();
            assert!((t.y_star[0] - (m + s * normal_quantile(tau).unwrap())).abs() < 1e-3);
        }
    }

    #[test]
    fn setting2_conditional_matches_grid_integration() {
        // integrate the joint density of (y*, x) over y* on a fine grid
        let joint = |ys: f64, x: f64| -> f64 {
            (0..5)
                .map(|k| {
                    let (my, mx) = SETTING2_MEANS[k];
                    let (vy, c, vx) = SETTING2_COV[k];
                    let det = vy * vx - c * c;
                    let (a, b) = (ys - my, x - mx);
                    let q = (vx * a * a - 2.0 * c * a * b + vy * b * b) / det;
                    let z = crate::special::normal_sf((-1.0 - my) / vy.sqrt());
                    SETTING2_WEIGHTS[k] * (-0.5 * q).exp()
                        / (2.0 * core::f64::consts::PI * det.sqrt())
                        / z
                })
                .sum()
        };
        for x in [0.0, 3.0, 6.5, 9.0] {
            let mix = setting2_conditional(x).unwrap();
            let n = 100_000;
            let (lo, hi) = (-1.0, 30.0);
            let h = (hi - lo) / n as f64;
            let mut cum = vec![0.0; n + 1];
            for i in 0..n {
                let a = lo + i as f64 * h;
                cum[i + 1] = cum[i]
                    + h / 6.0 * (joint(a, x) + 4.0 * joint(a + h / 2.0, x) + joint(a + h, x));
            }
            for i in (0..=n).step_by(5000) {
                let y = lo + i as f64 * h;
                assert!((cum[i] / cum[n] - conditional_cdf(&mix, y).unwrap()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn setting2_truth_matches_monte_carlo() {
        // the window at x = 5 holds ~15k draws: quantile SE about 0.015
        let s = gen_setting2(4_000_000, 3).unwrap();
        let lat = s.latent.unwrap();
        for x0 in [2.0, 5.0, 8.0] {
            let mut w: Vec<f64> = (0..lat.len())
                .filter(|&i| (s.data.x()[(i, 0)] - x0).abs() < 0.05)
                .map(|i| lat[i])
                .collect();
            w.sort_by(f64::total_cmp);
            for tau in [0.1, 0.5, 0.9] {
                let mc = w[(tau * w.len() as f64) as usize];
                let t = true_quantiles(Setting::TruncatedNormal, tau, &[x0])
                    .unwrap()
                    .y_star[0];
                assert!((mc - t).abs() < 0.05, "x {x0} τ {tau}: {mc} vs {t}");
            }
        }
    }

    #[test]
    fn truth_is_ordered_in_tau() {
        let grid: Vec<f64> = (0..60).map(|i| -2.5 + i as f64 * 0.2).collect();
        for setting in [Setting::PoissonBernoulli, Setting::TruncatedNormal] {
            let curves: Vec<_> = [0.1, 0.5, 0.9]
                .iter()
                .map(|&t| true_quantiles(setting, t, &grid).unwrap())
                .collect();
            for k in 0..grid.len() {
                assert!(
                    curves[0].y_star[k] < curves[1].y_star[k]
                        && curves[1].y_star[k] < curves[2].y_star[k]
                );
            }
        }
    }

    #[test]
    fn setting1_extreme_tail_is_component_two() {
        // at large x only the component-2 Poisson reaches this far
        let x = 3.0;
        let q = true_quantiles(Setting::PoissonBernoulli, 0.999, &[x])
            .unwrap()
            .y_star[0];
        let lam2 = (2.0 + 0.3 * x).exp();
        let lam1 = (0.8 + 0.4 * x).exp();
        let tail1 = 1.0 - regularized_upper_gamma(q + 1.0, lam1).unwrap();
        let tail2 = 1.0 - regularized_upper_gamma(q + 1.0, lam2).unwrap();
        // total tail 1e-3 comes almost entirely from component 2
        assert!(0.3 * tail2 > 0.99e-3, "{tail2}");
        assert!(0.2 * tail1 < 1e-6);
        assert!(q > lam2);
    }

    #[test]
    fn setting1_cdf_interpolates_bernoulli() {
        assert_eq!(bernoulli_interpolated_cdf(0.3, 0.0), 0.7);
        assert!((bernoulli_interpolated_cdf(0.3, -0.5) - 0.35).abs() < 1e-15);
        assert!((bernoulli_interpolated_cdf(0.3, 0.5) - 0.85).abs() < 1e-15);
        assert_eq!(bernoulli_interpolated_cdf(0.3, 1.0), 1.0);
    }

    #[test]
    fn trimmed_grid_bounds() {
        let x: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let g = trimmed_grid(&x, 5);
        assert!((g[0] - 0.025).abs() < 1e-12 && (g[4] - 0.975).abs() < 1e-12);
    }
}
