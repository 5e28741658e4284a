use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing parameter: fixed or chosen by GCV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Lambda {
    Fixed(f64),
    #[default]
    Auto,
}

impl Serialize for Lambda {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Fixed(v) => s.serialize_f64(*v),
            Lambda::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(alloc::string::String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if v > 0.0 && v.is_finite() => Ok(Lambda::Fixed(v)),
            Raw::Num(v) => Err(serde::de::Error::custom(alloc::format!(
                "lambda must be positive, got {v}"
            ))),
            Raw::Str(s) if s == "auto" => Ok(Lambda::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(alloc::format!(
                "lambda must be a number or \"auto\", got {s}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SplineSpec {
    pub degree: usize,
    pub interior_knots: usize,
    pub penalty_order: usize,
    pub lambda: Lambda,
}

impl Default for SplineSpec {
    fn default() -> Self {
        Self {
            degree: 3,
            interior_knots: 20,
            penalty_order: 2,
            lambda: Lambda::Auto,
        }
    }
}

impl SplineSpec {
    pub fn dim(&self) -> usize {
        self.interior_knots + self.degree + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.penalty_order >= self.dim() {
            return Err(Error::InvalidData(alloc::format!(
                "penalty order {} needs a basis larger than {}",
                self.penalty_order,
                self.dim()
            )));
        }
        if let Lambda::Fixed(l) = self.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidData(alloc::format!(
                    "lambda must be nonnegative, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// B-spline basis on equally spaced knots over [lower, upper], extended by
/// `degree` knots on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
    degree: usize,
    lower: f64,
    upper: f64,
}

impl SplineBasis {
    pub fn new(lower: f64, upper: f64, degree: usize, interior_knots: usize) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidInterval { lower, upper });
        }
        let h = (upper - lower) / (interior_knots + 1) as f64;
        let knots = (0..interior_knots + 2 * degree + 2)
            .map(|i| lower + (i as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            knots,
            degree,
            lower,
            upper,
        })
    }

    /// Basis spanning the observed range of `x`.
    pub fn from_data(x: &[f64], spec: &SplineSpec) -> Result<Self> {
        spec.validate()?;
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::InvalidData(
                "spline covariate needs at least two distinct values".into(),
            ));
        }
        Self::new(lo, hi, spec.degree, spec.interior_knots)
    }

    pub fn dim(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn span(&self, x: f64) -> usize {
        let d = self.degree;
        let last = self.dim() - 1;
        if x >= self.upper {
            return last;
        }
        // knots[d] = lower, spans d..=last
        let h = self.knots[d + 1] - self.knots[d];
        let mut i = d + ((x - self.lower) / h) as usize;
        i = i.clamp(d, last);
        while i > d && x < self.knots[i] {
            i -= 1;
        }
        while i < last && x >= self.knots[i + 1] {
            i += 1;
        }
        i
    }

    /// Nonzero basis values at x within knot span `span`, Cox–de Boor.
    pub(crate) fn local(&self, x: f64, span: usize) -> Vec<f64> {
        let d = self.degree;
        let t = &self.knots;
        let mut n = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        n[0] = 1.0;
        for j in 1..=d {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            n[j] = saved;
        }
        n
    }

    fn fill_row(&self, x: f64, out: &mut [f64]) {
        let span = self.span(x);
        for (k, v) in self.local(x, span).into_iter().enumerate() {
            out[span - self.degree + k] = v;
        }
    }

    /// N × m basis matrix. Values outside the knot range are clamped.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.len(), self.dim());
        let mut clamped = 0usize;
        let mut row = vec![0.0; self.dim()];
        for (i, &v) in x.iter().enumerate() {
            let c = v.clamp(self.lower, self.upper);
            if c != v {
                clamped += 1;
            }
            row.iter_mut().for_each(|r| *r = 0.0);
            self.fill_row(c, &mut row);
            for (j, r) in row.iter().enumerate() {
                out[(i, j)] = *r;
            }
        }
        if clamped > 0 {
            log::warn!(
                "{clamped} value(s) outside the knot range [{}, {}] were clamped",
                self.lower,
                self.upper
            );
        }
        out
    }
}

/// Basis matrix for one covariate on its observed range.
pub fn bspline_basis(x: &[f64], spec: &SplineSpec) -> Result<DMatrix<f64>> {
    Ok(SplineBasis::from_data(x, spec)?.evaluate(x))
}

/// Δ′Δ for the `order`-th difference operator on m coefficients.
pub fn difference_penalty(m: usize, order: usize) -> Result<DMatrix<f64>> {
    if order >= m {
        return Err(Error::InvalidData(alloc::format!(
            "difference order {order} needs more than {m} coefficients"
        )));
    }
    let mut delta = DMatrix::<f64>::identity(m, m);
    for _ in 0..order {
        let r = delta.nrows();
        delta = DMatrix::from_fn(r - 1, m, |i, j| delta[(i + 1, j)] - delta[(i, j)]);
    }
    Ok(delta.transpose() * delta)
}
