use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::solve_spd_scaled;
use crate::spline::{AdditiveDesign, Lambda, LAMBDA_GRID};

pub const GLM_MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-10;

/// Log-link Poisson fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: DVector<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub deviance_trace: Vec<f64>,
    pub edf: f64,
}

impl GlmFit {
    /// Fitted means exp(Zθ).
    pub fn mean(&self, z: &DMatrix<f64>) -> DVector<f64> {
        (z * &self.coefficients).map(f64::exp)
    }
}

fn deviance(y: &[f64], mu: &DVector<f64>) -> f64 {
    2.0 * y
        .iter()
        .zip(mu.iter())
        .map(|(&y, &m)| {
            if y > 0.0 {
                y * (y / m).ln() - (y - m)
            } else {
                m
            }
        })
        .sum::<f64>()
}

fn penalized_deviance(
    y: &[f64],
    z: &DMatrix<f64>,
    pen: &DVector<f64>,
    l2: f64,
    c: &DVector<f64>,
) -> f64 {
    let mu = (z * c).map(f64::exp);
    let n = y.len() as f64;
    deviance(y, &mu) / n
        + l2 * c
            .iter()
            .zip(pen.iter())
            .map(|(c, p)| p * c * c)
            .sum::<f64>()
}

// Penalized IRLS on (Z′WZ/N + λ²P) θ = Z′Wz/N with step halving.
fn pirls(y: &[f64], z: &DMatrix<f64>, pen: &DVector<f64>, lambda: f64) -> Result<GlmFit> {
    let n = y.len();
    if z.nrows() != n {
        return Err(Error::InvalidData(
            "design rows do not match the response".into(),
        ));
    }
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidData(
            "all-zero response: the Poisson MLE is infinite".into(),
        ));
    }
    let l2 = lambda * lambda;
    let nf = n as f64;
    let mut eta = DVector::from_fn(n, |i, _| (y[i] + 0.1).ln());
    let mut coef: Option<DVector<f64>> = None;
    let mut old = f64::INFINITY;
    let mut trace = Vec::new();
    for it in 1..=GLM_MAX_ITER {
        let mu = eta.map(f64::exp);
        let work = DVector::from_fn(n, |i, _| eta[i] + (y[i] - mu[i]) / mu[i]);
        let zw = DMatrix::from_fn(n, z.ncols(), |i, k| z[(i, k)] * mu[i]);
        let mut a = z.transpose() * &zw / nf;
        for k in 0..z.ncols() {
            a[(k, k)] += l2 * pen[k];
        }
        let rhs = zw.transpose() * &work / nf;
        let target = solve_spd_scaled(
            &a,
            &DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice()),
            "IRLS system",
        )?
        .column(0)
        .into_owned();
        let mut next = target.clone();
        let mut dev = penalized_deviance(y, z, pen, l2, &next);
        if let Some(prev) = &coef {
            let mut halvings = 0;
            while !(dev.is_finite() && dev <= old * (1.0 + 1e-12)) && halvings < 30 {
                next = (prev + &next) * 0.5;
                dev = penalized_deviance(y, z, pen, l2, &next);
                halvings += 1;
            }
        }
        if !dev.is_finite() {
            return Err(Error::NoConvergence(alloc::format!(
                "IRLS deviance diverged; trace {trace:?}"
            )));
        }
        trace.push(dev * nf);
        eta = z * &next;
        let converged = (dev - old).abs() / (dev.abs() + 0.1 / nf) < REL_TOL;
        old = dev;
        coef = Some(next);
        if converged {
            let c = coef.unwrap();
            let mu = eta.map(f64::exp);
            if (0..n).any(|i| y[i] == 0.0 && mu[i] < 1e-10) {
                return Err(Error::NoConvergence(alloc::format!(
                    "fitted rates numerically zero (separation); deviance trace {:?}",
                    &trace[trace.len().saturating_sub(5)..]
                )));
            }
            let zw = DMatrix::from_fn(n, z.ncols(), |i, k| z[(i, k)] * mu[i]);
            let g = z.transpose() * &zw / nf;
            let mut a = g.clone();
            for k in 0..z.ncols() {
                a[(k, k)] += l2 * pen[k];
            }
            let edf = solve_spd_scaled(&a, &g, "IRLS system")
                .map(|m| m.trace())
                .unwrap_or(f64::NAN);
            return Ok(GlmFit {
                deviance: deviance(y, &mu),
                coefficients: c,
                lambda,
                converged: true,
                iterations: it,
                deviance_trace: trace,
                edf,
            });
        }
    }
    Err(Error::NoConvergence(alloc::format!(
        "IRLS did not converge in {GLM_MAX_ITER} iterations (separation?); deviance trace {:?}",
        &trace[trace.len().saturating_sub(5)..]
    )))
}

fn as_f64(y: &[u64]) -> Vec<f64> {
    y.iter().map(|&v| v as f64).collect()
}

/// Unpenalized Poisson regression on a full design matrix (intercept
/// included by the caller).
pub fn fit_poisson_glm(y: &[u64], design: &DMatrix<f64>) -> Result<GlmFit> {
    pirls(&as_f64(y), design, &DVector::zeros(design.ncols()), 0.0)
}

/// Penalized Poisson regression on an additive design. With `Lambda::Auto`
/// λ minimizes the Poisson GCV score N·D/(N − edf)² over the λ grid.
pub fn fit_poisson_additive(y: &[u64], design: &AdditiveDesign, lambda: Lambda) -> Result<GlmFit> {
    let yf = as_f64(y);
    let pen = design.penalty_weights();
    match lambda {
        Lambda::Fixed(l) => pirls(&yf, design.z(), pen, l),
        Lambda::Auto => {
            if pen.iter().all(|p| *p == 0.0) {
                return pirls(&yf, design.z(), pen, 0.0);
            }
            let (lo, hi, k) = LAMBDA_GRID;
            let n = y.len() as f64;
            let mut best: Option<(f64, GlmFit)> = None;
            for i in 0..k {
                let l = lo * (hi / lo).powf(i as f64 / (k - 1) as f64);
                let fit = match pirls(&yf, design.z(), pen, l) {
                    Ok(f) => f,
                    Err(Error::Singular(_)) | Err(Error::NoConvergence(_)) => continue,
                    Err(e) => return Err(e),
                };
                let score = n * fit.deviance / (n - fit.edf).powi(2);
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    best = Some((score, fit));
                }
            }
            best.map(|(_, f)| f)
                .ok_or_else(|| Error::NoConvergence("penalized IRLS failed at every λ".into()))
        }
    }
}
