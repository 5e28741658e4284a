use crate::error::{Error, Result};
use crate::root::{brent, RootOptions};
use crate::special::{regularized_lower_gamma, regularized_upper_gamma};

const OPTS: RootOptions = RootOptions {
    xtol: 1e-12,
    ftol: 0.0,
    max_iter: 300,
};

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(alloc::format!(
            "Poisson mean must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn bracket_upper(lambda: f64) -> f64 {
    lambda + 12.0 * lambda.sqrt() + 20.0
}

// Solve on a log scale against whichever tail is small, so that tiny τ or
// 1 − τ keep relative accuracy.
fn solve(lambda: f64, log_target: f64, lower_tail: bool) -> Result<f64> {
    let lo = -1.0 + 1e-12;
    let f = |y: f64| {
        let s = y + 1.0;
        if lower_tail {
            regularized_upper_gamma(s, lambda)
                .map(|q| q.ln() - log_target)
                .unwrap_or(f64::NAN)
        } else {
            regularized_lower_gamma(s, lambda)
                .map(|p| log_target - p.ln())
                .unwrap_or(f64::NAN)
        }
    };
    if f(lo) >= 0.0 {
        return Ok(lo);
    }
    let mut hi = bracket_upper(lambda);
    let mut tries = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(Error::Bracketing {
                lower: lo,
                upper: hi,
            });
        }
    }
    brent(f, lo, hi, &OPTS)
}

/// y* > −1 solving Γ(y* + 1, λ)/Γ(y* + 1) = τ, the τ-quantile of the
/// continuous Poisson distribution.
pub fn cpoisson_quantile(lambda: f64, tau: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(alloc::format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    if tau <= 0.5 {
        solve(lambda, tau.ln(), true)
    } else {
        solve(lambda, (1.0 - tau).ln(), false)
    }
}

/// Same quantile given the upper tail probability 1 − τ directly, for levels
/// too close to 1 to represent τ itself.
pub fn cpoisson_quantile_tail(lambda: f64, tail: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::domain(alloc::format!(
            "tail must lie in (0, 1), got {tail}"
        )));
    }
    if tail >= 0.5 {
        solve(lambda, (1.0 - tail).ln(), true)
    } else {
        solve(lambda, tail.ln(), false)
    }
}
