use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::threestep::BaselineCurve;
use crate::error::{Error, Result};
use crate::linalg::solve_spd_scaled;
use crate::model::Dataset;
use crate::rng::RngStream;
use crate::spline::{select_lambda, AdditiveDesign, DesignSpec, Lambda};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterOptions {
    pub n_jitters: usize,
    /// Final smoothing width of the check loss.
    pub width: f64,
    pub max_iter: usize,
}

impl Default for JitterOptions {
    fn default() -> Self {
        Self {
            n_jitters: 50,
            width: 1e-4,
            max_iter: 500,
        }
    }
}

/// Check loss with its kink replaced by a parabola on [−h, h].
pub fn smoothed_check_loss(r: f64, tau: f64, h: f64) -> f64 {
    if r.abs() <= h {
        r * r / (4.0 * h) + h / 4.0 + (tau - 0.5) * r
    } else {
        r * (tau - if r < 0.0 { 1.0 } else { 0.0 })
    }
}

fn objective(
    z: &DVector<f64>,
    zm: &DMatrix<f64>,
    pen: &DVector<f64>,
    l2: f64,
    c: &DVector<f64>,
    tau: f64,
    h: f64,
) -> f64 {
    let r = z - zm * c;
    r.iter()
        .map(|&r| smoothed_check_loss(r, tau, h))
        .sum::<f64>()
        / z.len() as f64
        + 0.5
            * l2
            * c.iter()
                .zip(pen.iter())
                .map(|(c, p)| p * c * c)
                .sum::<f64>()
}

fn psi(r: f64, tau: f64, h: f64) -> f64 {
    if r.abs() <= h {
        r / (2.0 * h) + tau - 0.5
    } else if r < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

// Minimize the convex piecewise-quadratic objective along c + t d, t ≥ 0, by
// bisection on its nondecreasing derivative.
fn line_search(
    r: &DVector<f64>,
    a: &DVector<f64>,
    c: &DVector<f64>,
    d: &DVector<f64>,
    pen: &DVector<f64>,
    l2: f64,
    tau: f64,
    h: f64,
) -> f64 {
    let n = r.len() as f64;
    let dphi = |t: f64| {
        let loss: f64 = r
            .iter()
            .zip(a.iter())
            .map(|(r, a)| -a * psi(r - t * a, tau, h))
            .sum::<f64>()
            / n;
        loss + l2
            * (0..c.len())
                .map(|k| pen[k] * d[k] * (c[k] + t * d[k]))
                .sum::<f64>()
    };
    if dphi(0.0) >= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while dphi(hi) < 0.0 && hi < 1e12 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dphi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Penalized smoothed-check-loss regression in the design's reduced
/// coordinates: Levenberg-damped Newton directions with exact line search,
/// the width shrinking tenfold per stage down to `width`.
pub fn check_loss_fit(
    z: &DVector<f64>,
    design: &AdditiveDesign,
    lambda: f64,
    tau: f64,
    width: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(alloc::format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let zm = design.z();
    let pen = design.penalty_weights();
    let n = z.len() as f64;
    let q = zm.ncols();
    let l2 = lambda * lambda;
    let mut c = design.solver(lambda)?.coefficients(z)?;
    let spread = {
        let m = z.mean();
        (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
    };
    let gram_diag: Vec<f64> = (0..q).map(|k| zm.column(k).norm_squared() / n).collect();
    let mut h = spread.max(width);
    loop {
        let mut cur = objective(z, zm, pen, l2, &c, tau, h);
        let mut converged = false;
        for _ in 0..max_iter {
            let r = z - zm * &c;
            let mut grad = -(zm.transpose() * r.map(|r| psi(r, tau, h))) / n;
            for k in 0..q {
                grad[k] += l2 * pen[k] * c[k];
            }
            if grad.amax() <= 1e-12 {
                converged = true;
                break;
            }
            let zw = DMatrix::from_fn(zm.nrows(), q, |i, k| {
                if r[i].abs() <= h {
                    zm[(i, k)] / (2.0 * h)
                } else {
                    0.0
                }
            });
            let mut hess = zm.transpose() * &zw / n;
            for k in 0..q {
                // a small ridge makes directions of zero curvature follow the gradient
                hess[(k, k)] += l2 * pen[k] + 1e-6 * gram_diag[k] / (2.0 * h);
            }
            let d = -solve_spd_scaled(
                &hess,
                &DMatrix::from_column_slice(q, 1, grad.as_slice()),
                "check-loss Hessian",
            )?
            .column(0)
            .into_owned();
            let a = zm * &d;
            let t = line_search(&r, &a, &c, &d, pen, l2, tau, h);
            let cand = &c + &d * t;
            let v = objective(z, zm, pen, l2, &cand, tau, h);
            let stalled = !(v < cur - 1e-15 * (1.0 + cur.abs()));
            if v <= cur {
                c = cand;
                cur = v;
            }
            if stalled {
                converged = true;
                break;
            }
        }
        if h <= width {
            if !converged {
                return Err(Error::NoConvergence(alloc::format!(
                    "check-loss fit did not settle in {max_iter} iterations at width {h}"
                )));
            }
            return Ok(c);
        }
        h = (h / 10.0).max(width);
    }
}

/// Average of `n_jitters` smoothed check-loss fits to y + U(0, 1), reported
/// as level curves shifted by −1 onto the latent scale. λ is chosen by GCV on
/// the least-squares fit of y + 1/2.
pub fn jitter_quantile_fit(
    data: &Dataset,
    spec: &DesignSpec,
    tau: f64,
    opts: &JitterOptions,
    rng: &mut RngStream,
) -> Result<Vec<BaselineCurve>> {
    if opts.n_jitters == 0 {
        return Err(Error::InvalidData("at least one jitter is required".into()));
    }
    let design = AdditiveDesign::new(data.x(), spec)?;
    let y: Vec<f64> = data.y().iter().map(|&v| v as f64).collect();
    let lambda = match spec {
        DesignSpec::Polynomial { .. } => 0.0,
        DesignSpec::Spline(s) => match s.lambda {
            Lambda::Fixed(l) => l,
            Lambda::Auto => select_lambda(&design, &DVector::from_fn(y.len(), |i, _| y[i] + 0.5))?,
        },
    };
    let mut avg = DVector::zeros(design.q());
    for j in 0..opts.n_jitters {
        let mut sub = rng.substream(j as u64 + 1);
        let z = DVector::from_fn(y.len(), |i, _| y[i] + sub.random::<f64>());
        avg += check_loss_fit(&z, &design, lambda, tau, opts.width, opts.max_iter)?;
    }
    avg /= opts.n_jitters as f64;
    let (intercept, betas) = design.expand(&avg);
    let columns: &[String] = data.columns();
    Ok(columns
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (lo, hi) = design.basis(j).range();
            let g = crate::spline::CURVE_GRID_POINTS;
            let grid: Vec<f64> = (0..g)
                .map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64)
                .collect();
            let estimate = design
                .effect(j, &betas[j], &grid)
                .into_iter()
                .map(|e| e + intercept - 1.0)
                .collect();
            BaselineCurve {
                method: "jittering".into(),
                tau,
                covariate: name.clone(),
                grid,
                estimate,
                lower: None,
                upper: None,
            }
        })
        .collect())
}
