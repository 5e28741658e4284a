//! Conditional distribution of y* given x under one posterior draw, and
//! posterior draws of conditional quantiles.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{AtomKernel, LatentMoments, PosteriorDraw, LATENT_LOWER};
use crate::root::{brent, RootOptions};
use crate::special::{log_normal_sf, log_sum_exp};

/// How components are weighted by the covariate value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantileMode {
    /// Weights π_j N(x; μ_x, Σ_x), the untruncated covariate marginal.
    #[default]
    Paper,
    /// Also multiplies by P(y* > -1 | x)/P(y* > -1), the covariate marginal
    /// of the truncated joint kernel.
    Exact,
}

/// Default tolerance of [`solve_quantile`] in CDF units.
pub const DEFAULT_QUANTILE_TOL: f64 = 1e-8;

const BRACKET_DOUBLINGS: usize = 6;

/// Mixture of normals truncated to (-1, ∞) representing y* | x.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// log Φ̄((−1 − μ_j)/σ_j), the mass of each component above −1.
    log_mass: Vec<f64>,
}

impl ConditionalMixture {
    /// Build from normalized weights and untruncated moments.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if weights.len() != means.len() || means.len() != sds.len() || weights.is_empty() {
            return Err(Error::InvalidData(
                "mixture component lengths disagree".into(),
            ));
        }
        if sds.iter().any(|s| !(*s > 0.0)) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidData(
                "mixture needs positive sds and nonnegative weights".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(alloc::format!(
                "mixture weights sum to {total}"
            )));
        }
        let log_mass = means
            .iter()
            .zip(&sds)
            .map(|(m, s)| log_normal_sf((LATENT_LOWER - m) / s))
            .collect();
        Ok(Self {
            weights,
            means,
            sds,
            log_mass,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Density of y* | x.
    pub fn density(&self, y: f64) -> f64 {
        if !(y > LATENT_LOWER) {
            return 0.0;
        }
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .zip(&self.log_mass)
            .map(|(((w, m), s), lm)| {
                let z = (y - m) / s;
                w * (crate::special::normal_ln_pdf(z) - s.ln() - lm).exp()
            })
            .sum()
    }
}

/// Conditional mixture of y* at covariate value `x` for one posterior draw.
pub fn build_conditional(
    draw: &PosteriorDraw,
    x: &DVector<f64>,
    mode: QuantileMode,
) -> Result<ConditionalMixture> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("covariate vector is not finite".into()));
    }
    let mut log_w = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    for (w, atom) in draw.components() {
        if !(w > 0.0) {
            continue;
        }
        if atom.dim() != x.len() {
            return Err(Error::InvalidData(alloc::format!(
                "draw has dimension {} but x has {}",
                atom.dim(),
                x.len()
            )));
        }
        let k = AtomKernel::new(atom)?;
        let (m, v) = k.conditional_moments(x, LatentMoments::Derived)?;
        let s = v.sqrt();
        let mut lw = w.ln() + k.log_marginal_x(x);
        if mode == QuantileMode::Exact {
            lw += log_normal_sf((LATENT_LOWER - m) / s) - k.log_trunc();
        }
        log_w.push(lw);
        means.push(m);
        sds.push(s);
    }
    let total = log_sum_exp(&log_w);
    if !total.is_finite() {
        return Err(Error::Numerical(
            "all component weights underflow at this covariate value".into(),
        ));
    }
    let weights: Vec<f64> = log_w.iter().map(|l| (l - total).exp()).collect();
    let s: f64 = weights.iter().sum();
    ConditionalMixture::new(weights.into_iter().map(|w| w / s).collect(), means, sds)
}

/// F(y | x) for y ≥ −1.
pub fn conditional_cdf(mix: &ConditionalMixture, y: f64) -> Result<f64> {
    if y.is_nan() || y < LATENT_LOWER {
        return Err(Error::domain(alloc::format!(
            "conditional CDF needs y >= -1, got {y}"
        )));
    }
    if y == f64::INFINITY {
        return Ok(1.0);
    }
    let mut f = 0.0;
    for j in 0..mix.len() {
        let z = (y - mix.means[j]) / mix.sds[j];
        // [Φ(z) − Φ(a)]/[1 − Φ(a)] = 1 − Φ̄(z)/Φ̄(a)
        f += mix.weights[j] * -(log_normal_sf(z) - mix.log_mass[j]).exp_m1();
    }
    Ok(f.clamp(0.0, 1.0))
}

fn upper_start(mix: &ConditionalMixture) -> f64 {
    let mut hi = LATENT_LOWER + 1.0;
    let sd_max = mix.sds.iter().copied().fold(0.0, f64::max);
    let mu_max = mix.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi = hi.max(mu_max + 10.0 * sd_max);
    hi
}

fn solve_from(mix: &ConditionalMixture, tau: f64, lower: f64, tol: f64) -> Result<f64> {
    let f = |y: f64| conditional_cdf(mix, y).map(|p| p - tau).unwrap_or(f64::NAN);
    if f(lower) >= 0.0 {
        return Ok(lower);
    }
    let mut hi = upper_start(mix).max(lower + 1.0);
    let mut tries = 0;
    while f(hi) < 0.0 {
        if tries == BRACKET_DOUBLINGS {
            return Err(Error::Bracketing { lower, upper: hi });
        }
        hi = LATENT_LOWER + 2.0 * (hi - LATENT_LOWER);
        tries += 1;
    }
    brent(
        f,
        lower,
        hi,
        &RootOptions {
            xtol: 0.0,
            ftol: tol,
            max_iter: 400,
        },
    )
}

/// q with |F(q | x) − τ| ≤ tol.
pub fn solve_quantile(mix: &ConditionalMixture, tau: f64, tol: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(alloc::format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    solve_from(mix, tau, LATENT_LOWER, tol)
}

/// Quantiles at several τ, solved in increasing τ with each root used as the
/// lower bracket of the next so the results never cross.
pub fn solve_quantiles(mix: &ConditionalMixture, taus: &[f64], tol: f64) -> Result<Vec<f64>> {
    for &t in taus {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::domain(alloc::format!(
                "tau must lie in (0, 1), got {t}"
            )));
        }
    }
    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&a, &b| taus[a].total_cmp(&taus[b]));
    let mut out = vec![0.0; taus.len()];
    let mut lower = LATENT_LOWER;
    for i in order {
        lower = solve_from(mix, taus[i], lower, tol)?;
        out[i] = lower;
    }
    Ok(out)
}

/// S × N posterior draws of y*_τ for one τ.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDrawMatrix {
    pub tau: f64,
    pub mode: QuantileMode,
    pub tol: f64,
    /// Rows are draws, columns observations. Invalid cells hold NaN.
    pub values: DMatrix<f64>,
    pub observation_ids: Vec<String>,
    /// (draw, observation) cells whose solve failed.
    pub invalid: Vec<(usize, usize)>,
}

impl QuantileDrawMatrix {
    pub fn n_draws(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_obs(&self) -> usize {
        self.values.ncols()
    }

    /// Draws without invalid cells.
    pub fn complete_rows(&self) -> Vec<usize> {
        (0..self.n_draws())
            .filter(|&s| self.values.row(s).iter().all(|v| v.is_finite()))
            .collect()
    }
}

/// Maximum share of invalid cells before [`quantile_draws`] fails.
pub const MAX_INVALID_SHARE: f64 = 1e-3;

/// One matrix per τ, in the order of `taus`. `x` holds one observation per
/// row.
pub fn quantile_draws(
    draws: &[PosteriorDraw],
    x: &DMatrix<f64>,
    observation_ids: &[String],
    taus: &[f64],
    mode: QuantileMode,
    tol: f64,
) -> Result<Vec<QuantileDrawMatrix>> {
    if draws.is_empty() {
        return Err(Error::InvalidData("no posterior draws".into()));
    }
    let n = x.nrows();
    if observation_ids.len() != n {
        return Err(Error::InvalidData(
            "one observation id per row of x is required".into(),
        ));
    }
    let mut values = vec![DMatrix::from_element(draws.len(), n, f64::NAN); taus.len()];
    let mut invalid = Vec::new();
    let rows: Vec<DVector<f64>> = (0..n).map(|i| x.row(i).transpose()).collect();
    for (s, draw) in draws.iter().enumerate() {
        for (i, row) in rows.iter().enumerate() {
            let cell =
                build_conditional(draw, row, mode).and_then(|mix| solve_quantiles(&mix, taus, tol));
            match cell {
                Ok(qs) => {
                    for (t, q) in qs.into_iter().enumerate() {
                        values[t][(s, i)] = q;
                    }
                }
                Err(e) => {
                    log::warn!("quantile cell (draw {s}, observation {i}) failed: {e}");
                    invalid.push((s, i));
                }
            }
        }
    }
    let share = invalid.len() as f64 / (draws.len() * n) as f64;
    if share > MAX_INVALID_SHARE {
        return Err(Error::Numerical(alloc::format!(
            "{} of {} quantile cells failed (first at draw {}, observation {})",
            invalid.len(),
            draws.len() * n,
            invalid[0].0,
            invalid[0].1
        )));
    }
    Ok(taus
        .iter()
        .zip(values)
        .map(|(&tau, values)| QuantileDrawMatrix {
            tau,
            mode,
            tol,
            values,
            observation_ids: observation_ids.to_vec(),
            invalid: invalid.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClusterAtom;
    use crate::rng::RngStream;
    use crate::special::normal_quantile;
    use proptest::prelude::*;
    use rand::Rng;

    fn atom(mu_y: f64, s2: f64, mu_x: f64, c: f64, eta: f64) -> ClusterAtom {
        ClusterAtom {
            mu_y,
            sigma2_y: s2,
            mu_x: DVector::from_vec(vec![mu_x]),
            sigma_c: DMatrix::from_element(1, 1, c),
            eta: DVector::from_vec(vec![eta]),
        }
    }

    fn single(a: ClusterAtom) -> PosteriorDraw {
        PosteriorDraw {
            pi0: 0.0,
            weights: vec![1.0],
            atoms: vec![a],
            fresh_atoms: vec![],
            multiplicities: vec![],
            m: 0,
        }
    }

    fn x1(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn single_component_weight_one() {
        let mix = build_conditional(
            &single(atom(3.0, 1.0, 0.0, 1.0, 0.4)),
            &x1(2.0),
            QuantileMode::Paper,
        )
        .unwrap();
        assert_eq!(mix.weights, vec![1.0]);
    }

    #[test]
    fn modes_coincide_without_eta() {
        let d = PosteriorDraw {
            pi0: 0.3,
            weights: vec![0.5, 0.2],
            atoms: vec![
                atom(0.0, 1.0, -1.0, 1.0, 0.0),
                atom(2.0, 2.0, 1.0, 0.5, 0.0),
            ],
            fresh_atoms: vec![atom(-0.5, 0.5, 0.0, 2.0, 0.0)],
            multiplicities: vec![4],
            m: 4,
        };
        let a = build_conditional(&d, &x1(0.3), QuantileMode::Paper).unwrap();
        let b = build_conditional(&d, &x1(0.3), QuantileMode::Exact).unwrap();
        for (u, v) in a.weights.iter().zip(&b.weights) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn two_component_weights_by_hand() {
        let (a1, a2) = (
            atom(1.0, 2.0, 0.0, 1.0, 0.5),
            atom(4.0, 1.0, 2.0, 0.5, -0.3),
        );
        let d = PosteriorDraw {
            pi0: 0.0,
            weights: vec![0.4, 0.6],
            atoms: vec![a1.clone(), a2.clone()],
            fresh_atoms: vec![],
            multiplicities: vec![],
            m: 0,
        };
        let x = 1.2;
        // Σ_x = Σ_c + η²/σ², density by hand
        let dens = |a: &ClusterAtom| {
            let v = a.sigma_c[(0, 0)] + a.eta[0] * a.eta[0] / a.sigma2_y;
            (-(x - a.mu_x[0]).powi(2) / (2.0 * v)).exp() / (2.0 * core::f64::consts::PI * v).sqrt()
        };
        let (w1, w2) = (0.4 * dens(&a1), 0.6 * dens(&a2));
        let mix = build_conditional(&d, &x1(x), QuantileMode::Paper).unwrap();
        assert!((mix.weights[0] - w1 / (w1 + w2)).abs() < 1e-12);
        // exact mode multiplies by Φ((μ_c + 1)/σ_c)/Φ((μ + 1)/σ)
        let corr = |a: &ClusterAtom, m: f64, s: f64| {
            crate::special::normal_cdf((m + 1.0) / s)
                / crate::special::normal_cdf((a.mu_y + 1.0) / a.sigma2_y.sqrt())
        };
        let e = build_conditional(&d, &x1(x), QuantileMode::Exact).unwrap();
        let (e1, e2) = (
            w1 * corr(&a1, mix.means[0], mix.sds[0]),
            w2 * corr(&a2, mix.means[1], mix.sds[1]),
        );
        assert!((e.weights[0] - e1 / (e1 + e2)).abs() < 1e-12);
    }

    #[test]
    fn cdf_limits_and_median() {
        let mix = ConditionalMixture::new(vec![1.0], vec![10.0], vec![1.0]).unwrap();
        assert_eq!(conditional_cdf(&mix, -1.0).unwrap(), 0.0);
        assert_eq!(conditional_cdf(&mix, f64::INFINITY).unwrap(), 1.0);
        assert!((conditional_cdf(&mix, 10.0).unwrap() - 0.5).abs() < 1e-9);
        assert!(conditional_cdf(&mix, -1.5).is_err());
    }

    #[test]
    fn normal_quantile_far_from_boundary() {
        let mix = build_conditional(
            &single(atom(10.0, 1.0, 0.0, 1.0, 0.0)),
            &x1(0.0),
            QuantileMode::Paper,
        )
        .unwrap();
        let q = solve_quantile(&mix, 0.975, DEFAULT_QUANTILE_TOL).unwrap();
        assert!((q - 11.959964).abs() < 1e-6);
    }

    #[test]
    fn symmetric_two_component_median() {
        let mix = ConditionalMixture::new(vec![0.5, 0.5], vec![9.0, 11.0], vec![1.0, 1.0]).unwrap();
        assert!((solve_quantile(&mix, 0.5, 1e-12).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn far_below_boundary_component() {
        // nearly all mass of the untruncated normal lies below -1
        let mix = ConditionalMixture::new(vec![1.0], vec![-30.0], vec![1.0]).unwrap();
        let q = solve_quantile(&mix, 0.5, 1e-10).unwrap();
        assert!(q > -1.0 && q < -0.9, "{q}");
        assert!((conditional_cdf(&mix, q).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn wide_bracket_needed() {
        // σ tiny relative to the spread of means: first bracket already fine,
        // but a heavy far component needs the doubling
        let mix =
            ConditionalMixture::new(vec![0.5, 0.5], vec![0.0, 100.0], vec![1e-3, 50.0]).unwrap();
        let q = solve_quantile(&mix, 0.999, 1e-8).unwrap();
        assert!((conditional_cdf(&mix, q).unwrap() - 0.999).abs() <= 1e-8);
    }

    #[test]
    fn quantile_draws_shapes() {
        let d = single(atom(3.0, 1.0, 0.0, 1.0, 0.5));
        let x = DMatrix::from_element(1, 1, 0.2);
        let m = quantile_draws(
            core::slice::from_ref(&d),
            &x,
            &["a".into()],
            &[0.5],
            QuantileMode::Paper,
            1e-8,
        )
        .unwrap();
        assert_eq!((m[0].n_draws(), m[0].n_obs()), (1, 1));

        let x = DMatrix::from_vec(3, 1, vec![0.7, 0.7, 0.7]);
        let ids: Vec<String> = (0..3).map(|i| alloc::format!("{i}")).collect();
        let ms =
            quantile_draws(&[d], &x, &ids, &[0.9, 0.1, 0.5], QuantileMode::Paper, 1e-8).unwrap();
        assert_eq!(ms[0].tau, 0.9);
        for i in 0..3 {
            assert_eq!(ms[0].values[(0, i)], ms[0].values[(0, 0)]);
            assert!(
                ms[1].values[(0, i)] <= ms[2].values[(0, i)]
                    && ms[2].values[(0, i)] <= ms[0].values[(0, i)]
            );
        }
    }

    fn random_draw(rng: &mut RngStream, p: usize) -> PosteriorDraw {
        let k = rng.random_range(1..5);
        let r = rng.random_range(0..3);
        let mut atoms = Vec::new();
        for _ in 0..k + r {
            let mut c = DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5);
            c = &c * c.transpose() + DMatrix::identity(p, p) * 0.3;
            atoms.push(ClusterAtom {
                mu_y: rng.random::<f64>() * 20.0 - 3.0,
                sigma2_y: 0.05 + rng.random::<f64>() * 9.0,
                mu_x: DVector::from_fn(p, |_, _| rng.random::<f64>() * 4.0 - 2.0),
                sigma_c: c,
                eta: DVector::from_fn(p, |_, _| rng.random::<f64>() * 2.0 - 1.0),
            });
        }
        let alphas: Vec<f64> = vec![1.0; k + 1];
        let w = crate::sampling::sample_dirichlet(&alphas, rng).unwrap();
        let fresh = atoms.split_off(k);
        let multiplicities: Vec<usize> = fresh.iter().map(|_| rng.random_range(1..4)).collect();
        let m = multiplicities.iter().sum();
        let (pi0, weights) = if fresh.is_empty() {
            (0.0, {
                let t: f64 = w[1..].iter().sum();
                w[1..].iter().map(|v| v / t).collect()
            })
        } else {
            (w[0], w[1..].to_vec())
        };
        PosteriorDraw {
            pi0,
            weights,
            atoms,
            fresh_atoms: fresh,
            multiplicities,
            m,
        }
    }

    #[test]
    fn round_trip_on_random_mixtures() {
        let mut rng = RngStream::new(31, 0);
        let taus = [0.01, 0.1, 0.5, 0.9, 0.99];
        for _ in 0..100 {
            let d = random_draw(&mut rng, 2);
            let x = DVector::from_fn(2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            for mode in [QuantileMode::Paper, QuantileMode::Exact] {
                let mix = build_conditional(&d, &x, mode).unwrap();
                let qs = solve_quantiles(&mix, &taus, DEFAULT_QUANTILE_TOL).unwrap();
                for (q, t) in qs.iter().zip(taus) {
                    assert!((conditional_cdf(&mix, *q).unwrap() - t).abs() <= 1e-8);
                }
                assert!(qs.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn exact_cdf_integrates_joint_kernel() {
        // y* | x ∝ Σ w_j k_j(y*, x); integrate on a fine grid
        let mut rng = RngStream::new(5, 0);
        for _ in 0..10 {
            let d = random_draw(&mut rng, 1);
            let x = x1(rng.random::<f64>() * 2.0 - 1.0);
            let mix = build_conditional(&d, &x, QuantileMode::Exact).unwrap();
            let kernels: Vec<(f64, AtomKernel)> = d
                .components()
                .map(|(w, a)| (w, AtomKernel::new(a).unwrap()))
                .collect();
            // the kernel is right-continuous at the boundary, evaluate just inside
            let joint = |y: f64| {
                let y = y.max(-1.0 + 1e-13);
                kernels
                    .iter()
                    .map(|(w, k)| w * k.log_kernel(y, &x).exp())
                    .sum::<f64>()
            };
            let upper = mix
                .means
                .iter()
                .zip(&mix.sds)
                .map(|(m, s)| m + 12.0 * s)
                .fold(0.0, f64::max);
            let n = 200_000;
            let h = (upper + 1.0) / n as f64;
            // Simpson on [-1, upper]
            let mut cum = vec![0.0; n / 2 + 1];
            for i in 0..n / 2 {
                let a = -1.0 + 2.0 * i as f64 * h;
                cum[i + 1] =
                    cum[i] + h / 3.0 * (joint(a) + 4.0 * joint(a + h) + joint(a + 2.0 * h));
            }
            let total = cum[n / 2];
            for idx in [n / 20, n / 8, n / 5, n / 4] {
                let y = -1.0 + 2.0 * idx as f64 * h;
                let f = conditional_cdf(&mix, y).unwrap();
                assert!(
                    (cum[idx] / total - f).abs() < 1e-6,
                    "{} vs {f}",
                    cum[idx] / total
                );
            }
        }
    }

    #[test]
    fn quantile_tail_values() {
        let q = normal_quantile(0.9).unwrap();
        let mix = ConditionalMixture::new(vec![1.0], vec![50.0], vec![2.0]).unwrap();
        assert!((solve_quantile(&mix, 0.9, 1e-12).unwrap() - (50.0 + 2.0 * q)).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn cdf_is_monotone(seed in 0u64..1_000_000) {
            let mut rng = RngStream::new(seed, 7);
            let d = random_draw(&mut rng, 2);
            let x = DVector::from_fn(2, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let mix = build_conditional(&d, &x, QuantileMode::Exact).unwrap();
            let top = mix.means.iter().zip(&mix.sds).map(|(m, s)| m + 6.0 * s).fold(0.0, f64::max);
            let mut prev = 0.0;
            for i in 0..1000 {
                let y = -1.0 + (top + 1.0) * i as f64 / 999.0;
                let f = conditional_cdf(&mix, y).unwrap();
                prop_assert!(f >= prev);
                prev = f;
            }
        }
    }
}
