use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cpoisson::cpoisson_quantile;
use super::glm::fit_poisson_additive;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::RngStream;
use crate::spline::{AdditiveDesign, DesignSpec, Lambda, RegressionDraws};

/// Point curve of a comparison method, with an optional 95% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCurve {
    pub method: String,
    pub tau: f64,
    pub covariate: String,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

fn regression_lambda(spec: &DesignSpec) -> Lambda {
    match spec {
        DesignSpec::Spline(s) => s.lambda,
        DesignSpec::Polynomial { .. } => Lambda::Fixed(0.0),
    }
}

fn level_curves(fit: &RegressionDraws) -> Vec<Vec<f64>> {
    fit.summarize(true).into_iter().map(|s| s.mean).collect()
}

// Per τ, per covariate: a curve on the grid.
type Curves = Vec<Vec<Vec<f64>>>;
// Curves, GLM λ and regression λ per τ.
type StepOutput = (Curves, f64, Vec<f64>);

// Steps 1–3 on one data set. Returns per-τ level curves on the given grids
// and the smoothing parameters used.
fn three_step_once(
    design: AdditiveDesign,
    y: &[u64],
    columns: &[String],
    taus: &[f64],
    glm_lambda: Lambda,
    reg_lambda: &[Lambda],
    grids: Option<&[Vec<f64>]>,
) -> Result<StepOutput> {
    let glm = fit_poisson_additive(y, &design, glm_lambda)?;
    let mu = glm.mean(design.z());
    let mut curves = Vec::with_capacity(taus.len());
    let mut lambdas = Vec::with_capacity(taus.len());
    for (t, &tau) in taus.iter().enumerate() {
        let q = mu
            .iter()
            .map(|&m| cpoisson_quantile(m, tau))
            .collect::<Result<Vec<f64>>>()?;
        let ys = DMatrix::from_row_slice(1, q.len(), &q);
        let fit =
            RegressionDraws::from_responses(design.clone(), columns, tau, &ys, reg_lambda[t])?;
        lambdas.push(fit.lambda);
        let c = match grids {
            None => level_curves(&fit),
            Some(g) => (0..columns.len())
                .map(|j| {
                    let beta = fit
                        .betas
                        .row(0)
                        .columns(offset(&design, j), design.basis(j).dim())
                        .transpose();
                    design
                        .effect(j, &beta, &g[j])
                        .into_iter()
                        .map(|e| e + fit.intercepts[0])
                        .collect()
                })
                .collect(),
        };
        curves.push(c);
    }
    Ok((curves, glm.lambda, lambdas))
}

fn offset(design: &AdditiveDesign, j: usize) -> usize {
    (0..j).map(|k| design.basis(k).dim()).sum()
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Poisson regression, continuous-Poisson quantiles at the fitted means,
/// normal (penalized) regression of those quantiles, and a case bootstrap
/// with `bootstrap` replicates for 95% bands. Replicates reuse the bases
/// and smoothing parameters of the full-data fit.
pub fn continuous_poisson_three_step(
    data: &Dataset,
    spec: &DesignSpec,
    taus: &[f64],
    bootstrap: usize,
    rng: &mut RngStream,
) -> Result<Vec<BaselineCurve>> {
    let design = AdditiveDesign::new(data.x(), spec)?;
    let bases = design.bases();
    let columns = data.columns();
    let glm_lambda = regression_lambda(spec);
    let reg = alloc::vec![regression_lambda(spec); taus.len()];
    let first = RegressionDraws::from_responses(
        design.clone(),
        columns,
        0.5,
        &DMatrix::zeros(1, data.n()),
        Lambda::Fixed(1.0),
    )?;
    let grids: Vec<Vec<f64>> = first.curves.iter().map(|c| c.grid.clone()).collect();
    let (point, glm_l, reg_l) =
        three_step_once(design, data.y(), columns, taus, glm_lambda, &reg, None)?;

    let mut boot: Vec<Curves> = Vec::new();
    let fixed: Vec<Lambda> = reg_l.iter().map(|&l| Lambda::Fixed(l)).collect();
    let mut failures = 0;
    for b in 0..bootstrap {
        let mut sub = rng.substream(b as u64 + 1);
        let idx: Vec<usize> = (0..data.n())
            .map(|_| sub.random_range(0..data.n()))
            .collect();
        let xb = data.x().select_rows(&idx);
        let yb: Vec<u64> = idx.iter().map(|&i| data.y()[i]).collect();
        let rep = AdditiveDesign::with_bases(bases.clone(), &xb).and_then(|d| {
            three_step_once(
                d,
                &yb,
                columns,
                taus,
                Lambda::Fixed(glm_l),
                &fixed,
                Some(&grids),
            )
        });
        match rep {
            Ok((c, _, _)) => boot.push(c),
            Err(e) => {
                log::warn!("bootstrap replicate {b} failed: {e}");
                failures += 1;
            }
        }
    }
    if bootstrap > 0 && failures * 2 > bootstrap {
        return Err(Error::NoConvergence(alloc::format!(
            "{failures} of {bootstrap} bootstrap replicates failed"
        )));
    }

    let mut out = Vec::new();
    for (t, &tau) in taus.iter().enumerate() {
        for (j, name) in columns.iter().enumerate() {
            let (lower, upper) = if boot.is_empty() {
                (None, None)
            } else {
                let g = grids[j].len();
                let mut lo = Vec::with_capacity(g);
                let mut hi = Vec::with_capacity(g);
                for k in 0..g {
                    let mut v: Vec<f64> = boot.iter().map(|c| c[t][j][k]).collect();
                    v.sort_by(f64::total_cmp);
                    lo.push(type7(&v, 0.025));
                    hi.push(type7(&v, 0.975));
                }
                (Some(lo), Some(hi))
            };
            out.push(BaselineCurve {
                method: "continuous-poisson".into(),
                tau,
                covariate: name.clone(),
                grid: grids[j].clone(),
                estimate: point[t][j].clone(),
                lower,
                upper,
            });
        }
    }
    Ok(out)
}
