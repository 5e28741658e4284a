//! Random primitives: truncated normal, Dirichlet, inverse gamma,
//! inverse Wishart and multivariate normal draws.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize};
use crate::rng::RngStream;
use crate::special::{log_sum_exp, normal_cdf, normal_quantile};

/// Standardized distance beyond which the exponential-rejection sampler
/// replaces inverse-CDF sampling.
const TAIL_CUTOFF: f64 = 5.0;

/// An open interval on the extended real line. Either endpoint may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || !(lower < upper) {
            return Err(Error::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn real_line() -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    /// The rounding cell (g − 1, g] of a count `g`.
    pub fn count_cell(g: u64) -> Self {
        Self {
            lower: g as f64 - 1.0,
            upper: g as f64,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// Standard normal draw.
pub fn sample_standard_normal(rng: &mut RngStream) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from N(mu, sigma²) restricted to `region`.
///
/// Inverse-CDF sampling is used when the region reaches within five standard
/// deviations of the mean; beyond that an exponential-proposal rejection
/// sampler keeps full precision in the far tails.
pub fn sample_truncated_normal(
    mu: f64,
    sigma: f64,
    region: &Interval,
    rng: &mut RngStream,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(Error::domain(alloc::format!(
            "truncated normal needs finite mu and positive sigma, got ({mu}, {sigma})"
        )));
    }
    let alpha = (region.lower - mu) / sigma;
    let beta = (region.upper - mu) / sigma;
    if !(alpha < beta) {
        return Err(Error::InvalidInterval {
            lower: region.lower,
            upper: region.upper,
        });
    }
    let z = standard_truncated(alpha, beta, rng);
    let x = mu + sigma * z;
    // rounding may land exactly on an endpoint for very narrow cells
    Ok(nudge_inside(x, region))
}

fn nudge_inside(x: f64, region: &Interval) -> f64 {
    if x <= region.lower {
        let next = region.lower + region.lower.abs().max(1.0) * f64::EPSILON;
        next.min(0.5 * (region.lower + region.upper))
    } else if x >= region.upper {
        let prev = region.upper - region.upper.abs().max(1.0) * f64::EPSILON;
        prev.max(0.5 * (region.lower + region.upper))
    } else {
        x
    }
}

fn standard_truncated(alpha: f64, beta: f64, rng: &mut RngStream) -> f64 {
    if alpha >= TAIL_CUTOFF {
        return tail_rejection(alpha, beta, rng);
    }
    if beta <= -TAIL_CUTOFF {
        return -tail_rejection(-beta, -alpha, rng);
    }
    if alpha == f64::NEG_INFINITY && beta == f64::INFINITY {
        return sample_standard_normal(rng);
    }
    let u = rng.uniform_open();
    let z = if alpha > 0.0 {
        // work with upper-tail probabilities to keep precision
        let pa = normal_cdf(-alpha);
        let pb = normal_cdf(-beta);
        let p = pa - u * (pa - pb);
        -normal_quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)).unwrap_or(0.0)
    } else {
        let pa = normal_cdf(alpha);
        let pb = normal_cdf(beta);
        let p = pa + u * (pb - pa);
        normal_quantile(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)).unwrap_or(0.0)
    };
    z.clamp(alpha, beta)
}

// Robert (1995) exponential proposal, restricted to (alpha, beta), alpha >= 0.
fn tail_rejection(alpha: f64, beta: f64, rng: &mut RngStream) -> f64 {
    let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
    let width = beta - alpha;
    let trunc_mass = if width.is_finite() {
        -(-rate * width).exp_m1()
    } else {
        1.0
    };
    // log of the envelope ratio is maximized at the clamp of `rate` to the region
    let peak = rate.clamp(alpha, beta);
    let log_peak = rate * peak - 0.5 * peak * peak;
    loop {
        let u = rng.uniform_open();
        let z = alpha - (-u * trunc_mass).ln_1p() / rate;
        if !(z > alpha && z < beta) {
            continue;
        }
        let log_accept = rate * z - 0.5 * z * z - log_peak;
        if rng.uniform_open().ln() <= log_accept {
            return z;
        }
    }
}

/// ln of a Gamma(shape, 1) variate; stable for shapes well below one.
pub fn sample_log_gamma(shape: f64, rng: &mut RngStream) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::domain(alloc::format!(
            "gamma shape must be positive, got {shape}"
        )));
    }
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0)
            .map_err(|_| Error::domain("gamma parameters"))?
            .sample(rng);
        Ok(g.ln())
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0)
            .map_err(|_| Error::domain("gamma parameters"))?
            .sample(rng);
        Ok(g.ln() + rng.uniform_open().ln() / shape)
    }
}

/// Gamma(shape, 1) variate.
pub fn sample_gamma(shape: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(sample_log_gamma(shape, rng)?.exp())
}

/// Dirichlet draw; components are positive and sum to one.
pub fn sample_dirichlet(alphas: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(Error::domain("dirichlet needs at least one cell"));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::domain(alloc::format!(
            "dirichlet parameters must be positive, got {a}"
        )));
    }
    let logs = alphas
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect::<Result<Vec<f64>>>()?;
    let total = log_sum_exp(&logs);
    let mut w: Vec<f64> = logs
        .iter()
        .map(|l| (l - total).exp().max(f64::MIN_POSITIVE))
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// Inverse-gamma draw with density ∝ x^{-shape-1} exp(-scale / x).
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::domain(alloc::format!(
            "inverse gamma scale must be positive, got {scale}"
        )));
    }
    Ok(scale / sample_gamma(shape, rng)?)
}

/// χ²(k) draw.
pub fn sample_chi_squared(k: f64, rng: &mut RngStream) -> Result<f64> {
    Ok(2.0 * sample_gamma(0.5 * k, rng)?)
}

/// Inverse-Wishart IW(dof, scale) draw with mean scale / (dof − p − 1).
///
/// A Wishart(dof, scale⁻¹) matrix is built by the Bartlett decomposition and
/// inverted through its triangular factor.
pub fn sample_inverse_wishart(
    dof: f64,
    scale: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let p = scale.nrows();
    if !(dof > p as f64 - 1.0) {
        return Err(Error::domain(alloc::format!(
            "inverse Wishart needs dof > p - 1, got dof={dof}, p={p}"
        )));
    }
    let precision = cholesky(scale, "inverse-Wishart scale")?.inverse();
    let l = cholesky(&precision, "inverse-Wishart scale inverse")?.unpack();
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = sample_chi_squared(dof - i as f64, rng)?.sqrt();
        for j in 0..i {
            a[(i, j)] = sample_standard_normal(rng);
        }
    }
    let la = l * a;
    let la_inv = la
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    Ok(symmetrize(&(la_inv.transpose() * la_inv)))
}

/// Multivariate normal draw.
pub fn sample_mvnormal(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let chol = cholesky(covariance, "normal covariance")?;
    let z = DVector::from_iterator(
        mean.len(),
        (0..mean.len()).map(|_| sample_standard_normal(rng)),
    );
    Ok(mean + chol.l() * z)
}

/// Index drawn with probabilities ∝ exp(log_weights).
pub fn sample_log_categorical(log_weights: &[f64], rng: &mut RngStream) -> Option<usize> {
    let m = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let total: f64 = log_weights.iter().map(|l| (l - m).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, l) in log_weights.iter().enumerate() {
        let w = (l - m).exp();
        if w > 0.0 {
            last = Some(k);
            if u < w {
                return Some(k);
            }
            u -= w;
        }
    }
    last
}
