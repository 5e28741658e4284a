//! Small dense linear-algebra helpers over `nalgebra`.

use alloc::string::ToString;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub type Chol = Cholesky<f64, Dyn>;

/// Cholesky factorization, failing with a named error when `m` is not SPD.
pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotPositiveDefinite(alloc::format!(
            "{what}: not square"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(alloc::format!(
            "{what}: non-finite entry"
        )));
    }
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
}

/// (m + m') / 2
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse of an SPD matrix.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, what)?.inverse()))
}

/// log |A| from its Cholesky factor.
pub fn log_det(chol: &Chol) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

/// Log density of N(mean, Σ) at `x` given the Cholesky factor of Σ.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, chol: &Chol) -> f64 {
    let diff = x - mean;
    let z = chol
        .l_dirty()
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let p = x.len() as f64;
    -0.5 * (p * LN_2PI + log_det(chol) + z.norm_squared())
}

/// Quadratic form v' Σ⁻¹ v given the Cholesky factor of Σ.
pub fn inv_quad_form(v: &DVector<f64>, chol: &Chol) -> f64 {
    chol.l_dirty()
        .solve_lower_triangular(v)
        .expect("cholesky factor has a positive diagonal")
        .norm_squared()
}

/// Solve A X = B for SPD `a` after scaling it to unit diagonal. Fails with
/// `Singular` when a relative pivot falls below `1e-13`.
pub fn solve_spd_scaled(a: &DMatrix<f64>, rhs: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let q = a.nrows();
    let mut s = DVector::zeros(q);
    for k in 0..q {
        if !(a[(k, k)] > 0.0) || !a[(k, k)].is_finite() {
            return Err(Error::Singular(alloc::format!(
                "{what}: empty direction {k}"
            )));
        }
        s[k] = 1.0 / a[(k, k)].sqrt();
    }
    let scaled = DMatrix::from_fn(q, q, |i, j| a[(i, j)] * s[i] * s[j]);
    let chol = cholesky(&scaled, what).map_err(|_| Error::Singular(what.to_string()))?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_pivot * min_pivot < 1e-13 {
        return Err(Error::Singular(alloc::format!(
            "{what}: numerically rank deficient"
        )));
    }
    let mut b = rhs.clone();
    for (k, mut row) in b.row_iter_mut().enumerate() {
        row *= s[k];
    }
    let mut x = chol.solve(&b);
    for (k, mut row) in x.row_iter_mut().enumerate() {
        row *= s[k];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what.to_string()));
    }
    Ok(x)
}
