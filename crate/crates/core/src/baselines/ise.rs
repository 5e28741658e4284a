use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A method curve against a reference method, both measured against truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveComparison {
    pub tau: f64,
    pub grid: Vec<f64>,
    pub method_curve: Vec<f64>,
    pub reference_curve: Vec<f64>,
    pub true_curve: Vec<f64>,
    pub ise_ratio: f64,
}

impl CurveComparison {
    pub fn new(
        tau: f64,
        grid: Vec<f64>,
        method: Vec<f64>,
        reference: Vec<f64>,
        truth: Vec<f64>,
    ) -> Result<Self> {
        let ise_ratio = relative_ise(&method, &reference, &truth, &grid)?;
        Ok(Self {
            tau,
            grid,
            method_curve: method,
            reference_curve: reference,
            true_curve: truth,
            ise_ratio,
        })
    }
}

/// Trapezoidal ∫(curve − truth)².
pub fn integrated_squared_error(curve: &[f64], truth: &[f64], grid: &[f64]) -> Result<f64> {
    if curve.len() != grid.len() || truth.len() != grid.len() || grid.len() < 2 {
        return Err(Error::InvalidData(
            "curves must share a grid of at least two points".into(),
        ));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidData(
            "grid must be strictly increasing".into(),
        ));
    }
    let sq: Vec<f64> = curve
        .iter()
        .zip(truth)
        .map(|(c, t)| (c - t).powi(2))
        .collect();
    Ok(grid
        .windows(2)
        .zip(sq.windows(2))
        .map(|(g, s)| (g[1] - g[0]) * (s[0] + s[1]) / 2.0)
        .sum())
}

/// ISE(method)/ISE(reference).
pub fn relative_ise(method: &[f64], reference: &[f64], truth: &[f64], grid: &[f64]) -> Result<f64> {
    let r = integrated_squared_error(reference, truth, grid)?;
    if !(r > 0.0) {
        return Err(Error::Numerical(
            "reference curve has zero integrated squared error".into(),
        ));
    }
    Ok(integrated_squared_error(method, truth, grid)? / r)
}

/// Piecewise-linear interpolation of a curve given on an increasing `grid`.
/// Points outside the grid are an error.
pub fn interpolate(grid: &[f64], values: &[f64], at: &[f64]) -> Result<Vec<f64>> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(Error::InvalidData(
            "interpolation needs matching grid and values".into(),
        ));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    at.iter()
        .map(|&x| {
            if !(x >= lo - 1e-12 * (1.0 + lo.abs()) && x <= hi + 1e-12 * (1.0 + hi.abs())) {
                return Err(Error::domain(alloc::format!(
                    "{x} lies outside [{lo}, {hi}]"
                )));
            }
            let k = grid.partition_point(|&g| g <= x).clamp(1, grid.len() - 1);
            let w = (x - grid[k - 1]) / (grid[k] - grid[k - 1]);
            Ok(values[k - 1] + w.clamp(0.0, 1.0) * (values[k] - values[k - 1]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_ratios() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let truth: Vec<f64> = grid.iter().map(|x| x * x).collect();
        let off = |c: f64| truth.iter().map(|t| t + c).collect::<Vec<_>>();
        assert_eq!(
            relative_ise(&off(0.3), &off(0.3), &truth, &grid).unwrap(),
            1.0
        );
        assert_eq!(relative_ise(&truth, &off(0.3), &truth, &grid).unwrap(), 0.0);
        assert!(
            (relative_ise(&off(0.2), &off(0.5), &truth, &grid).unwrap() - 0.04 / 0.25).abs()
                < 1e-12
        );
        assert!(relative_ise(&off(0.2), &truth, &truth, &grid).is_err());
        assert!(integrated_squared_error(&[1.0], &[1.0], &[0.0]).is_err());
        let c = CurveComparison::new(0.5, grid.clone(), off(1.0), off(2.0), truth.clone()).unwrap();
        assert!((c.ise_ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_exact_on_lines() {
        let grid = [0.0, 0.5, 2.0, 3.0];
        let vals: Vec<f64> = grid.iter().map(|g| 1.0 - 2.0 * g).collect();
        let at = [0.0, 0.25, 1.7, 3.0];
        let got = interpolate(&grid, &vals, &at).unwrap();
        for (g, a) in got.iter().zip(at) {
            assert!((g - (1.0 - 2.0 * a)).abs() < 1e-14);
        }
        assert!(interpolate(&grid, &vals, &[3.5]).is_err());
    }
}
