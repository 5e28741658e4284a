use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::basis::{difference_penalty, SplineBasis, SplineSpec};
use crate::error::{Error, Result};
use crate::linalg::solve_spd_scaled;

/// How each covariate enters the regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignSpec {
    Spline(SplineSpec),
    /// Unpenalized polynomial of the given degree.
    Polynomial {
        degree: usize,
    },
}

impl Default for DesignSpec {
    fn default() -> Self {
        DesignSpec::Spline(SplineSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateBasis {
    Spline {
        basis: SplineBasis,
        penalty_order: usize,
    },
    Polynomial {
        degree: usize,
        lower: f64,
        upper: f64,
    },
}

impl CovariateBasis {
    pub fn from_data(x: &[f64], spec: &DesignSpec) -> Result<Self> {
        match spec {
            DesignSpec::Spline(s) => Ok(CovariateBasis::Spline {
                basis: SplineBasis::from_data(x, s)?,
                penalty_order: s.penalty_order,
            }),
            DesignSpec::Polynomial { degree } => {
                if *degree == 0 {
                    return Err(Error::InvalidData(
                        "polynomial degree must be at least 1".into(),
                    ));
                }
                let lower = x.iter().copied().fold(f64::INFINITY, f64::min);
                let upper = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(lower < upper) {
                    return Err(Error::InvalidData(
                        "covariate needs at least two distinct values".into(),
                    ));
                }
                Ok(CovariateBasis::Polynomial {
                    degree: *degree,
                    lower,
                    upper,
                })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovariateBasis::Spline { basis, .. } => basis.dim(),
            CovariateBasis::Polynomial { degree, .. } => *degree,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            CovariateBasis::Spline { basis, .. } => basis.range(),
            CovariateBasis::Polynomial { lower, upper, .. } => (*lower, *upper),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            CovariateBasis::Spline { basis, .. } => basis.evaluate(x),
            CovariateBasis::Polynomial {
                degree,
                lower,
                upper,
            } => {
                let (c, s) = ((lower + upper) / 2.0, (upper - lower) / 2.0);
                DMatrix::from_fn(x.len(), *degree, |i, k| ((x[i] - c) / s).powi(k as i32 + 1))
            }
        }
    }

    /// Raw penalty matrix on the basis coefficients.
    pub fn penalty(&self) -> Result<DMatrix<f64>> {
        match self {
            CovariateBasis::Spline {
                basis,
                penalty_order,
            } => difference_penalty(basis.dim(), *penalty_order),
            CovariateBasis::Polynomial { degree, .. } => Ok(DMatrix::zeros(*degree, *degree)),
        }
    }

    /// Orthonormal coordinates T (m × q) in which the penalty is diagonal,
    /// with the constant direction removed when it is unpenalized.
    fn reduction(&self) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let (basis, order) = match self {
            CovariateBasis::Polynomial { degree, .. } => {
                return Ok((DMatrix::identity(*degree, *degree), vec![0.0; *degree]));
            }
            CovariateBasis::Spline {
                basis,
                penalty_order,
            } => (basis, *penalty_order),
        };
        let m = basis.dim();
        let d = difference_penalty(m, order)?;
        if order == 0 {
            return Ok((DMatrix::identity(m, m), vec![1.0; m]));
        }
        // null space: polynomials of degree < order in the coefficient index
        let vander = DMatrix::from_fn(m, order, |i, k| {
            (2.0 * i as f64 / (m - 1) as f64 - 1.0).powi(k as i32)
        });
        let q = vander.qr().q();
        let eig = SymmetricEigen::new(d);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let range: Vec<usize> = (0..m)
            .filter(|&k| eig.eigenvalues[k] > 1e-9 * top)
            .collect();
        if range.len() != m - order {
            return Err(Error::Numerical(alloc::format!(
                "difference penalty has rank {} instead of {}",
                range.len(),
                m - order
            )));
        }
        let mut t = DMatrix::zeros(m, m - 1);
        let mut pen = Vec::with_capacity(m - 1);
        for k in 1..order {
            t.set_column(k - 1, &q.column(k));
            pen.push(0.0);
        }
        for (c, &k) in range.iter().enumerate() {
            t.set_column(order - 1 + c, &eig.eigenvectors.column(k));
            pen.push(eig.eigenvalues[k]);
        }
        Ok((t, pen))
    }
}

#[derive(Debug, Clone)]
struct Block {
    basis: CovariateBasis,
    col_means: DVector<f64>,
    transform: DMatrix<f64>,
    offset: usize,
}

/// Intercept plus centered basis blocks for each covariate, stored in the
/// reduced coordinates where the penalty is diagonal.
#[derive(Debug, Clone)]
pub struct AdditiveDesign {
    blocks: Vec<Block>,
    z: DMatrix<f64>,
    pen: DVector<f64>,
    gram: DMatrix<f64>,
}

/// Penalized least-squares solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub lambda: f64,
    pub intercept: f64,
    /// Coefficients on each covariate's basis.
    pub betas: Vec<DVector<f64>>,
    pub fitted: DVector<f64>,
    pub rss: f64,
    pub edf: f64,
}

/// Linear map y ↦ reduced coefficients at a fixed λ.
#[derive(Debug, Clone)]
pub struct Solver {
    pub lambda: f64,
    map: DMatrix<f64>,
    edf: f64,
}

/// 40 log-spaced values on [1e-4, 1e4].
pub const LAMBDA_GRID: (f64, f64, usize) = (1e-4, 1e4, 40);

impl AdditiveDesign {
    /// Bases on the observed covariate ranges. `x` holds observations in rows.
    pub fn new(x: &DMatrix<f64>, spec: &DesignSpec) -> Result<Self> {
        let bases = (0..x.ncols())
            .map(|j| CovariateBasis::from_data(x.column(j).as_slice(), spec))
            .collect::<Result<Vec<_>>>()?;
        Self::with_bases(bases, x)
    }

    pub fn with_bases(bases: Vec<CovariateBasis>, x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if bases.len() != x.ncols() || n == 0 {
            return Err(Error::InvalidData(
                "one basis per covariate column is required".into(),
            ));
        }
        let mut blocks = Vec::new();
        let mut cols: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0)];
        let mut pen = vec![0.0];
        for (j, basis) in bases.into_iter().enumerate() {
            let b = basis.evaluate(x.column(j).as_slice());
            let col_means = DVector::from_fn(b.ncols(), |k, _| b.column(k).mean());
            let centered = DMatrix::from_fn(n, b.ncols(), |i, k| b[(i, k)] - col_means[k]);
            let (transform, p) = basis.reduction()?;
            let zj = centered * &transform;
            let offset = cols.len();
            cols.extend(zj.column_iter().map(|c| c.into_owned()));
            pen.extend(p);
            blocks.push(Block {
                basis,
                col_means,
                transform,
                offset,
            });
        }
        let z = DMatrix::from_columns(&cols);
        let gram = z.transpose() * &z / n as f64;
        Ok(Self {
            blocks,
            z,
            pen: DVector::from_vec(pen),
            gram,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Number of reduced coefficients including the intercept.
    pub fn q(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.blocks.len()
    }

    pub fn basis(&self, j: usize) -> &CovariateBasis {
        &self.blocks[j].basis
    }

    pub fn bases(&self) -> Vec<CovariateBasis> {
        self.blocks.iter().map(|b| b.basis.clone()).collect()
    }

    /// Reduced design matrix, intercept first.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Diagonal of the penalty in reduced coordinates.
    pub fn penalty_weights(&self) -> &DVector<f64> {
        &self.pen
    }

    /// Total basis dimension over covariates.
    pub fn basis_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.basis.dim()).sum()
    }

    pub fn solver(&self, lambda: f64) -> Result<Solver> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(alloc::format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        let q = self.q();
        let l2 = lambda * lambda;
        let mut a = self.gram.clone();
        for k in 0..q {
            a[(k, k)] += l2 * self.pen[k];
        }
        // unit-diagonal scaling keeps huge λ well conditioned in these coordinates
        let map = solve_spd_scaled(
            &a,
            &(self.z.transpose() / self.n() as f64),
            "penalized normal equations",
        )
        .map_err(|e| match e {
            Error::Singular(m) => Error::Singular(alloc::format!("{m} at λ = {lambda}")),
            e => e,
        })?;
        let edf = (&map * &self.z).trace();
        Ok(Solver { lambda, map, edf })
    }

    /// Intercept and per-covariate basis coefficients from reduced ones.
    pub fn expand(&self, coef: &DVector<f64>) -> (f64, Vec<DVector<f64>>) {
        let betas = self
            .blocks
            .iter()
            .map(|b| {
                let q = b.transform.ncols();
                &b.transform * coef.rows(b.offset, q)
            })
            .collect();
        (coef[0], betas)
    }

    /// Centered partial effect of covariate j at the given values.
    pub fn effect(&self, j: usize, beta: &DVector<f64>, at: &[f64]) -> Vec<f64> {
        let b = &self.blocks[j];
        let shift = b.col_means.dot(beta);
        let m = b.basis.evaluate(at);
        (&m * beta).iter().map(|v| v - shift).collect()
    }

    pub fn fit(&self, y: &DVector<f64>, lambda: f64) -> Result<PenalizedFit> {
        self.solver(lambda)?.fit(self, y)
    }

    /// N·RSS/(N − tr H)².
    pub fn gcv(&self, y: &DVector<f64>, lambda: f64) -> Result<f64> {
        let f = self.fit(y, lambda)?;
        let n = self.n() as f64;
        Ok(n * f.rss / (n - f.edf).powi(2))
    }
}

impl Solver {
    pub fn edf(&self) -> f64 {
        self.edf
    }

    pub fn coefficients(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.map.ncols() {
            return Err(Error::InvalidData(
                "response length does not match design".into(),
            ));
        }
        Ok(&self.map * y)
    }

    /// Reduced coefficients for many responses at once, one per column.
    pub fn coefficients_many(&self, ys: &DMatrix<f64>) -> DMatrix<f64> {
        &self.map * ys
    }

    pub fn fit(&self, design: &AdditiveDesign, y: &DVector<f64>) -> Result<PenalizedFit> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "response contains non-finite values".into(),
            ));
        }
        let coef = self.coefficients(y)?;
        let fitted = design.z() * &coef;
        let rss = (y - &fitted).norm_squared();
        let (intercept, betas) = design.expand(&coef);
        Ok(PenalizedFit {
            lambda: self.lambda,
            intercept,
            betas,
            fitted,
            rss,
            edf: self.edf,
        })
    }
}

/// λ minimizing GCV over [`LAMBDA_GRID`].
pub fn select_lambda(design: &AdditiveDesign, y: &DVector<f64>) -> Result<f64> {
    let (lo, hi, k) = LAMBDA_GRID;
    let mut best = (f64::INFINITY, lo, 0usize);
    for i in 0..k {
        let lambda = lo * (hi / lo).powf(i as f64 / (k - 1) as f64);
        let score = match design.gcv(y, lambda) {
            Ok(s) => s,
            Err(Error::Singular(_)) => continue,
            Err(e) => return Err(e),
        };
        if score < best.0 {
            best = (score, lambda, i);
        }
    }
    if !best.0.is_finite() {
        return Err(Error::Singular(
            "penalized system is singular at every grid value".into(),
        ));
    }
    if best.2 == 0 || best.2 == k - 1 {
        log::warn!("GCV optimum λ = {} lies on the grid boundary", best.1);
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::sampling::sample_standard_normal;
    use rand::Rng;

    fn spec(lambda_order: usize, k: usize) -> DesignSpec {
        DesignSpec::Spline(SplineSpec {
            degree: 3,
            interior_knots: k,
            penalty_order: lambda_order,
            ..SplineSpec::default()
        })
    }

    fn data(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = RngStream::new(seed, 0);
        let x = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() * 4.0);
        let y = DVector::from_fn(n, |i, _| {
            (x[(i, 0)] * 1.3).sin() * 2.0 + 0.3 * sample_standard_normal(&mut rng)
        });
        (x, y)
    }

    #[test]
    fn interpolates_square_system() {
        // degree 1, 3 interior knots: 5 basis functions, 5 distinct points
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 0.9, 2.1, 3.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 2.0]);
        let d = AdditiveDesign::new(
            &x,
            &DesignSpec::Spline(SplineSpec {
                degree: 1,
                interior_knots: 3,
                penalty_order: 2,
                ..SplineSpec::default()
            }),
        )
        .unwrap();
        let f = d.fit(&y, 0.0).unwrap();
        assert!((f.fitted - &y).amax() < 1e-10);
    }

    #[test]
    fn huge_lambda_gives_least_squares_line() {
        let (x, y) = data(200, 1);
        let d = AdditiveDesign::new(&x, &spec(2, 20)).unwrap();
        let f = d.fit(&y, 1e12).unwrap();
        // ordinary least-squares line
        let xs = x.column(0);
        let (mx, my) = (xs.mean(), y.mean());
        let b = xs
            .iter()
            .zip(y.iter())
            .map(|(a, c)| (a - mx) * (c - my))
            .sum::<f64>()
            / xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
        for i in 0..200 {
            let line = my + b * (xs[i] - mx);
            assert!((f.fitted[i] - line).abs() < 1e-4);
        }
        assert!((f.edf - 2.0).abs() < 1e-6);
    }

    #[test]
    fn matches_dense_normal_equations() {
        // 5 points, degree 1, 1 interior knot: direct solve in the raw basis
        let xv = [0.0, 0.7, 1.5, 2.2, 3.0];
        let y = DVector::from_vec(vec![0.3, 1.1, 0.4, 2.0, 1.7]);
        let s = SplineSpec {
            degree: 1,
            interior_knots: 1,
            penalty_order: 1,
            ..SplineSpec::default()
        };
        let lambda = 0.37;
        let x = DMatrix::from_column_slice(5, 1, &xv);
        let d = AdditiveDesign::new(&x, &DesignSpec::Spline(s)).unwrap();
        let f = d.fit(&y, lambda).unwrap();
        // oracle: [1 | B] with penalty on B, plus the constraint handled by
        // centering: minimize over (α, β) with β ⟂ 1
        let b = super::super::bspline_basis(&xv, &s).unwrap();
        let pen = difference_penalty(3, 1).unwrap();
        let n = 5.0;
        let mut design = DMatrix::zeros(5, 4);
        for i in 0..5 {
            design[(i, 0)] = 1.0;
            for k in 0..3 {
                design[(i, k + 1)] = b[(i, k)];
            }
        }
        let mut a = design.transpose() * &design / n;
        for i in 0..3 {
            for j in 0..3 {
                a[(i + 1, j + 1)] += lambda * lambda * pen[(i, j)];
            }
        }
        // the all-ones direction on β is unidentified; pin it with a ridge
        for i in 1..4 {
            for j in 1..4 {
                a[(i, j)] += 1.0 / 3.0;
            }
        }
        let rhs = design.transpose() * &y / n;
        let sol = a.lu().solve(&rhs).unwrap();
        let fitted = &design * &sol;
        assert!((fitted - &f.fitted).amax() < 1e-10);
    }

    #[test]
    fn residuals_orthogonal_and_effects_centered() {
        let mut rng = RngStream::new(8, 0);
        let n = 150;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = DVector::from_fn(n, |i, _| {
            x[(i, 0)].powi(2) - x[(i, 1)] + 0.2 * sample_standard_normal(&mut rng)
        });
        let d = AdditiveDesign::new(&x, &spec(2, 10)).unwrap();
        let lambda = 0.05;
        let f = d.fit(&y, lambda).unwrap();
        let r = &y - &f.fitted;
        assert!(r.mean().abs() < 1e-12);
        for j in 0..2 {
            let xs: Vec<f64> = x.column(j).iter().copied().collect();
            let b = d.basis(j).evaluate(&xs);
            let bc = DMatrix::from_fn(n, b.ncols(), |i, k| b[(i, k)] - b.column(k).mean());
            let lhs = bc.transpose() * &r / n as f64;
            let rhs = d.basis(j).penalty().unwrap() * &f.betas[j] * lambda * lambda;
            assert!((lhs - rhs).amax() < 1e-8);
            let eff = d.effect(j, &f.betas[j], &xs);
            assert!(eff.iter().sum::<f64>().abs() / (n as f64) < 1e-10);
        }
        // fitted = intercept + effects
        let e0 = d.effect(0, &f.betas[0], x.column(0).as_slice());
        let e1 = d.effect(1, &f.betas[1], x.column(1).as_slice());
        for i in 0..n {
            assert!((f.intercept + e0[i] + e1[i] - f.fitted[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_line_any_lambda() {
        let (x, _) = data(80, 3);
        let y = DVector::from_fn(80, |i, _| 1.5 - 0.7 * x[(i, 0)]);
        let d = AdditiveDesign::new(&x, &spec(2, 20)).unwrap();
        let l = select_lambda(&d, &y).unwrap();
        for lambda in [1e-4, 1.0, l, 1e4] {
            let f = d.fit(&y, lambda).unwrap();
            assert!((f.fitted - &y).amax() < 1e-8);
        }
    }

    #[test]
    fn noise_prefers_heavy_smoothing() {
        let mut high = 0;
        for seed in 0..10 {
            let mut rng = RngStream::new(100 + seed, 0);
            let x = DMatrix::from_fn(200, 1, |_, _| rng.random::<f64>());
            let y = DVector::from_fn(200, |_, _| sample_standard_normal(&mut rng));
            let d = AdditiveDesign::new(&x, &spec(2, 20)).unwrap();
            let l = select_lambda(&d, &y).unwrap();
            assert_eq!(l, select_lambda(&d, &y).unwrap());
            if l >= 10.0 {
                high += 1;
            }
        }
        assert!(high >= 7, "{high} of 10");
    }

    #[test]
    fn signal_gets_moderate_lambda() {
        let (x, y) = data(300, 4);
        let d = AdditiveDesign::new(&x, &spec(2, 20)).unwrap();
        let l = select_lambda(&d, &y).unwrap();
        assert!(l < 1.0, "{l}");
        let f = d.fit(&y, l).unwrap();
        let err: f64 = (0..300)
            .map(|i| (f.fitted[i] - (x[(i, 0)] * 1.3).sin() * 2.0).powi(2))
            .sum::<f64>()
            / 300.0;
        assert!(err < 0.01, "{err}");
    }

    #[test]
    fn polynomial_design_is_least_squares() {
        let (x, _) = data(50, 5);
        let y = DVector::from_fn(50, |i, _| 2.0 + x[(i, 0)] - 0.5 * x[(i, 0)].powi(2));
        let d = AdditiveDesign::new(&x, &DesignSpec::Polynomial { degree: 2 }).unwrap();
        let f = d.fit(&y, 3.0).unwrap();
        assert!((f.fitted - &y).amax() < 1e-10);
    }

    #[test]
    fn singular_without_penalty() {
        // more basis functions than distinct points and no smoothing
        let x = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 2.0, 3.0]);
        let d = AdditiveDesign::new(&x, &spec(2, 20)).unwrap();
        assert!(matches!(d.solver(0.0), Err(Error::Singular(_))));
    }
}
