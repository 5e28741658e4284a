//! Data and parameter types of the Pitman-Yor truncated-normal mixture.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::rng::RngStream;
use crate::sampling::{
    sample_inverse_gamma, sample_inverse_wishart, sample_mvnormal, sample_standard_normal,
};

/// Count responses with continuous covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u64>,
    x: DMatrix<f64>,
    columns: Vec<String>,
    rows: Vec<DVector<f64>>,
}

impl Dataset {
    /// `x` is N × P with one row per observation.
    pub fn new(y: Vec<u64>, x: DMatrix<f64>, columns: Vec<String>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidData(alloc::format!(
                "need at least 2 observations, got {n}"
            )));
        }
        if x.nrows() != n {
            return Err(Error::InvalidData(alloc::format!(
                "covariate matrix has {} rows for {n} responses",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("need at least one covariate".into()));
        }
        if columns.len() != x.ncols() {
            return Err(Error::InvalidData(alloc::format!(
                "{} column names for {} covariates",
                columns.len(),
                x.ncols()
            )));
        }
        if let Some((i, j)) = (0..n)
            .flat_map(|i| (0..x.ncols()).map(move |j| (i, j)))
            .find(|&(i, j)| !x[(i, j)].is_finite())
        {
            return Err(Error::InvalidData(alloc::format!(
                "non-finite covariate at row {i}, column {j}"
            )));
        }
        let rows = (0..n).map(|i| x.row(i).transpose()).collect();
        Ok(Self {
            y,
            x,
            columns,
            rows,
        })
    }

    /// Dataset with covariates named `x1, x2, ...`.
    pub fn with_default_names(y: Vec<u64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| alloc::format!("x{j}")).collect();
        Self::new(y, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn row(&self, i: usize) -> &DVector<f64> {
        &self.rows[i]
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let x = DMatrix::from_fn(idx.len(), self.p(), |r, c| self.x[(idx[r], c)]);
        Self::new(y, x, self.columns.clone())
    }
}

/// One mixture component θ = (μ_y, σ_y², μ_x, Σ_c, η).
///
/// The joint covariance of (y*, x) is [[σ_y², η'], [η, Σ_c + ηη'/σ_y²]].
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAtom {
    pub mu_y: f64,
    pub sigma2_y: f64,
    pub mu_x: DVector<f64>,
    pub sigma_c: DMatrix<f64>,
    pub eta: DVector<f64>,
}

impl ClusterAtom {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_y > 0.0) || !self.sigma2_y.is_finite() || !self.mu_y.is_finite() {
            return Err(Error::Numerical(alloc::format!(
                "invalid (mu_y, sigma2_y) = ({}, {})",
                self.mu_y,
                self.sigma2_y
            )));
        }
        cholesky(&self.sigma_c, "Sigma_c")?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu_x.len()
    }

    /// Covariance of the covariate marginal, Σ_c + ηη'/σ_y².
    pub fn sigma_x(&self) -> DMatrix<f64> {
        &self.sigma_c + &self.eta * self.eta.transpose() / self.sigma2_y
    }
}

/// Hyperparameters of the base measure G0.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMeasure {
    pub mu_y0: f64,
    pub sigma2_y0: f64,
    pub k0: f64,
    pub t0: f64,
    pub mu_x0: DVector<f64>,
    pub sigma_x0: DMatrix<f64>,
    pub n0: f64,
    pub s0: DMatrix<f64>,
    pub mu_eta0: DVector<f64>,
    pub sigma_eta0: DMatrix<f64>,
}

impl BaseMeasure {
    pub fn dim(&self) -> usize {
        self.mu_x0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        let bad = |what: &str| Err(Error::domain(alloc::format!("base measure: {what}")));
        if !(self.sigma2_y0 > 0.0) {
            return bad("sigma2_y0 must be positive");
        }
        if !(self.k0 > 0.0) || !(self.t0 > 0.0) {
            return bad("k0 and t0 must be positive");
        }
        if !(self.n0 > p as f64 + 1.0) {
            return bad("n0 must exceed P + 1");
        }
        if self.sigma_x0.nrows() != p
            || self.s0.nrows() != p
            || self.mu_eta0.len() != p
            || self.sigma_eta0.nrows() != p
        {
            return bad("dimension mismatch");
        }
        cholesky(&self.sigma_x0, "Sigma_x0")?;
        cholesky(&self.s0, "S0")?;
        cholesky(&self.sigma_eta0, "Sigma_eta0")?;
        Ok(())
    }

    /// Draw an atom from G0.
    pub fn sample(&self, rng: &mut RngStream) -> Result<ClusterAtom> {
        Ok(ClusterAtom {
            mu_y: self.mu_y0 + self.sigma2_y0.sqrt() * sample_standard_normal(rng),
            sigma2_y: sample_inverse_gamma(self.k0, self.t0, rng)?,
            mu_x: sample_mvnormal(&self.mu_x0, &self.sigma_x0, rng)?,
            sigma_c: sample_inverse_wishart(self.n0, &self.s0, rng)?,
            eta: sample_mvnormal(&self.mu_eta0, &self.sigma_eta0, rng)?,
        })
    }
}

/// Pitman-Yor discount and strength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyParams {
    discount: f64,
    strength: f64,
}

impl PyParams {
    pub fn new(discount: f64, strength: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::domain(alloc::format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        if !(strength > -discount) || !strength.is_finite() {
            return Err(Error::domain(alloc::format!(
                "strength must exceed -discount, got strength={strength}, discount={discount}"
            )));
        }
        Ok(Self { discount, strength })
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 - 1.0)
}

/// Data-driven base measure: centered at sample means, with twice the
/// sample variances for the location priors.
pub fn default_hyperparameters(data: &Dataset) -> Result<BaseMeasure> {
    let p = data.p();
    let y: Vec<f64> = data.y().iter().map(|&v| v as f64).collect();
    let var_y = covariance(&y, &y);
    if !(var_y > 0.0) {
        return Err(Error::ZeroVariance("response".into()));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| data.column(j)).collect();
    let mut var_x = Vec::with_capacity(p);
    for (j, c) in cols.iter().enumerate() {
        let v = covariance(c, c);
        if !(v > 0.0) {
            return Err(Error::ZeroVariance(data.columns()[j].clone()));
        }
        var_x.push(v);
    }
    let sd_y = var_y.sqrt();
    let k0 = 3.0;
    let n0 = p as f64 + 2.0;
    let var_x = DVector::from_vec(var_x);
    Ok(BaseMeasure {
        mu_y0: mean(&y),
        sigma2_y0: 2.0 * var_y,
        k0,
        t0: (k0 - 1.0) * var_y,
        mu_x0: DVector::from_iterator(p, cols.iter().map(|c| mean(c))),
        sigma_x0: DMatrix::from_diagonal(&(&var_x * 2.0)),
        n0,
        s0: DMatrix::from_diagonal(&(&var_x * (n0 - p as f64 - 1.0))),
        mu_eta0: DVector::from_iterator(p, cols.iter().map(|c| covariance(c, &y) / sd_y)),
        sigma_eta0: DMatrix::identity(p, p) * 10.0,
    })
}
