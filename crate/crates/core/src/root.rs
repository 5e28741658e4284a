//! Bracketing scalar root finding (Brent's method).

use crate::error::{Error, Result};

/// Stopping rules for [`brent`].
#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Stop once the bracket is narrower than this.
    pub xtol: f64,
    /// Stop once |f(x)| is at most this.
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-9,
            ftol: 1e-9,
            max_iter: 200,
        }
    }
}

/// Root of `f` on `[lower, upper]` with a shared tolerance on |f| and on the
/// bracket width.
pub fn find_root<F: FnMut(f64) -> f64>(f: F, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    brent(
        f,
        lower,
        upper,
        &RootOptions {
            xtol: tol,
            ftol: tol,
            ..RootOptions::default()
        },
    )
}

/// Brent's method. Requires `f(lower)` and `f(upper)` not to share a strict
/// sign; returns an endpoint directly when it is a root. Returns the best
/// iterate if the iteration cap is reached.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lower: f64,
    upper: f64,
    opts: &RootOptions,
) -> Result<f64> {
    if !(lower.is_finite() && upper.is_finite()) || !(lower <= upper) {
        return Err(Error::InvalidInterval { lower, upper });
    }
    let mut a = lower;
    let mut b = upper;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa.is_nan() || fb.is_nan() {
        return Err(Error::Numerical(
            "root finder: NaN at bracket endpoint".into(),
        ));
    }
    if fa == 0.0 || fa.abs() <= opts.ftol && fa.abs() <= fb.abs() {
        return Ok(a);
    }
    if fb == 0.0 || fb.abs() <= opts.ftol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracketing { lower, upper });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let xm = 0.5 * (c - b);
        if fb.abs() <= opts.ftol || xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic interpolation or secant
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Numerical("root finder: NaN inside bracket".into()));
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normal_cdf, normal_quantile};

    #[test]
    fn linear_root() {
        let r = find_root(|x| x - 2.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_by_root() {
        let r = find_root(|x| normal_cdf(x) - 0.975, -10.0, 10.0, 1e-12).unwrap();
        assert!((r - 1.959964).abs() < 1e-6);
        assert!((r - normal_quantile(0.975).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn root_at_endpoint() {
        assert_eq!(find_root(|x| x, 0.0, 3.0, 1e-9).unwrap(), 0.0);
        assert_eq!(find_root(|x| x - 3.0, 0.0, 3.0, 1e-9).unwrap(), 3.0);
    }

    #[test]
    fn no_sign_change() {
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-9),
            Err(Error::Bracketing { .. })
        ));
    }

    #[test]
    fn tolerances_honored() {
        let mut evals = 0;
        let r = brent(
            |x| {
                evals += 1;
                x.powi(3) - 0.3
            },
            0.0,
            2.0,
            &RootOptions {
                xtol: 1e-15,
                ftol: 0.0,
                max_iter: 200,
            },
        )
        .unwrap();
        assert!((r - 0.3f64.cbrt()).abs() < 1e-14);
        assert!(evals < 60);
    }
}
