use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::Lambda;
use super::fit::{select_lambda, AdditiveDesign, DesignSpec};
use crate::error::{Error, Result};
use crate::quantile::QuantileDrawMatrix;

pub const CURVE_GRID_POINTS: usize = 200;

/// Partial-effect draws of one covariate on its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveDraws {
    pub covariate: String,
    pub grid: Vec<f64>,
    /// grid × S, centered over observations.
    pub effects: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct RegressionDraws {
    pub tau: f64,
    pub lambda: f64,
    pub intercepts: Vec<f64>,
    /// S × total basis dimension, covariate blocks in column order.
    pub betas: DMatrix<f64>,
    pub curves: Vec<CurveDraws>,
    /// S × N fitted values.
    pub fitted: DMatrix<f64>,
    pub design: AdditiveDesign,
}

/// Pointwise posterior mean and equal-tailed 95% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub covariate: String,
    pub tau: f64,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RegressionDraws {
    /// Fit every row of `ys` (S × N) at one λ, chosen by GCV on the row mean
    /// when `lambda` is auto.
    pub fn from_responses(
        design: AdditiveDesign,
        columns: &[String],
        tau: f64,
        ys: &DMatrix<f64>,
        lambda: Lambda,
    ) -> Result<Self> {
        let s = ys.nrows();
        if s == 0 {
            return Err(Error::InvalidData("no response draws".into()));
        }
        if ys.ncols() != design.n() || columns.len() != design.n_covariates() {
            return Err(Error::InvalidData(
                "response draws do not match the design".into(),
            ));
        }
        if let Some(bad) = (0..s).find(|&r| ys.row(r).iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData(alloc::format!(
                "response draw {bad} has non-finite values"
            ))
            .at_iteration(bad));
        }
        let lambda = match lambda {
            Lambda::Fixed(l) => l,
            Lambda::Auto => {
                let mean = DVector::from_fn(ys.ncols(), |i, _| ys.column(i).mean());
                select_lambda(&design, &mean)?
            }
        };
        let solver = design.solver(lambda)?;
        let coefs = solver.coefficients_many(&ys.transpose());
        let fitted = (design.z() * &coefs).transpose();
        let mut intercepts = Vec::with_capacity(s);
        let mut betas = DMatrix::zeros(s, design.basis_dim());
        let mut curves: Vec<CurveDraws> = columns
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let (lo, hi) = design.basis(j).range();
                let grid = (0..CURVE_GRID_POINTS)
                    .map(|g| lo + (hi - lo) * g as f64 / (CURVE_GRID_POINTS - 1) as f64)
                    .collect();
                CurveDraws {
                    covariate: name.clone(),
                    grid,
                    effects: DMatrix::zeros(CURVE_GRID_POINTS, s),
                }
            })
            .collect();
        for r in 0..s {
            let (a, bs) = design.expand(&coefs.column(r).into_owned());
            intercepts.push(a);
            let mut off = 0;
            for (j, b) in bs.iter().enumerate() {
                betas
                    .view_mut((r, off), (1, b.len()))
                    .copy_from(&b.transpose());
                off += b.len();
                let e = design.effect(j, b, &curves[j].grid);
                curves[j].effects.set_column(r, &DVector::from_vec(e));
            }
        }
        Ok(Self {
            tau,
            lambda,
            intercepts,
            betas,
            curves,
            fitted,
            design,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.intercepts.len()
    }

    /// Summaries per covariate. With `level` the intercept is added to each
    /// effect, giving the quantile curve itself when there is one covariate.
    pub fn summarize(&self, level: bool) -> Vec<CurveSummary> {
        self.curves
            .iter()
            .map(|c| {
                let g = c.grid.len();
                let mut mean = Vec::with_capacity(g);
                let mut lower = Vec::with_capacity(g);
                let mut upper = Vec::with_capacity(g);
                for k in 0..g {
                    let mut v: Vec<f64> = (0..self.n_draws())
                        .map(|s| c.effects[(k, s)] + if level { self.intercepts[s] } else { 0.0 })
                        .collect();
                    mean.push(v.iter().sum::<f64>() / v.len() as f64);
                    v.sort_by(f64::total_cmp);
                    lower.push(type7(&v, 0.025));
                    upper.push(type7(&v, 0.975));
                }
                CurveSummary {
                    covariate: c.covariate.clone(),
                    tau: self.tau,
                    grid: c.grid.clone(),
                    mean,
                    lower,
                    upper,
                }
            })
            .collect()
    }
}

/// Regress each posterior draw of y*_τ on the covariates. λ is selected once
/// on the draw-wise mean and then held fixed. Draws with invalid quantile
/// cells are skipped.
pub fn general_bayes_update(
    quantiles: &QuantileDrawMatrix,
    x: &DMatrix<f64>,
    columns: &[String],
    spec: &DesignSpec,
) -> Result<RegressionDraws> {
    if x.nrows() != quantiles.n_obs() {
        return Err(Error::InvalidData(alloc::format!(
            "quantile draws cover {} observations but x has {}",
            quantiles.n_obs(),
            x.nrows()
        )));
    }
    let rows = quantiles.complete_rows();
    if rows.len() < quantiles.n_draws() {
        log::warn!(
            "skipping {} draw(s) with failed quantile cells",
            quantiles.n_draws() - rows.len()
        );
    }
    if rows.is_empty() {
        return Err(Error::InvalidData("no complete quantile draws".into()));
    }
    let ys = quantiles.values.select_rows(&rows);
    let design = AdditiveDesign::new(x, spec)?;
    let lambda = match spec {
        DesignSpec::Spline(s) => s.lambda,
        DesignSpec::Polynomial { .. } => Lambda::Fixed(0.0),
    };
    RegressionDraws::from_responses(design, columns, quantiles.tau, &ys, lambda)
}
