//! Prior law of the number of occupied clusters under a Pitman-Yor urn, and
//! calibration of (discount, strength) to a target prior mean and sd.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::PyParams;
use crate::rng::RngStream;

/// Exact prior mean and standard deviation of K_n.
///
/// Uses the moment recursion of the sequential urn: a new cluster opens at
/// step m + 1 with probability (ϑ + φK_m)/(ϑ + m), which is linear in K_m, so
/// the first two moments propagate exactly.
pub fn cluster_count_moments(py: &PyParams, n: usize) -> (f64, f64) {
    let (phi, theta) = (py.discount(), py.strength());
    let mut m1 = 1.0;
    let mut m2 = 1.0;
    for m in 1..n {
        let denom = theta + m as f64;
        let next_m2 = m2 + (2.0 * theta * m1 + 2.0 * phi * m2 + theta + phi * m1) / denom;
        m1 += (theta + phi * m1) / denom;
        m2 = next_m2;
    }
    (m1, (m2 - m1 * m1).max(0.0).sqrt())
}

/// Simulated K_n for `reps` independent urn runs.
pub fn simulate_cluster_counts(
    py: &PyParams,
    n: usize,
    reps: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    let (phi, theta) = (py.discount(), py.strength());
    (0..reps)
        .map(|_| {
            let mut k = 1usize;
            for m in 1..n {
                let p_new = (theta + phi * k as f64) / (theta + m as f64);
                if rng.uniform_open() < p_new {
                    k += 1;
                }
            }
            k
        })
        .collect()
}

const BISECTION_STEPS: usize = 100;

fn strength_for_mean(discount: f64, target_mean: f64, n: usize) -> Result<f64> {
    let mean_at = |theta: f64| cluster_count_moments(&PyParams::new(discount, theta).unwrap(), n).0;
    let mut lo = -discount + 1e-12;
    let mut hi = 1.0f64;
    while mean_at(hi) < target_mean {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Infeasible(alloc::format!(
                "prior mean {target_mean} unreachable"
            )));
        }
    }
    if mean_at(lo) > target_mean {
        return Err(Error::Infeasible(alloc::format!(
            "prior mean {target_mean} is below the minimum for discount {discount}"
        )));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target_mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Find (discount, strength) whose prior K_N law has the target mean and sd.
///
/// Nested bisection: for each discount the strength is solved to match the
/// mean, and the discount is then solved to match the sd, which increases
/// with the discount along the matched-mean curve.
pub fn solve_py_params(target_mean: f64, target_sd: f64, n: usize) -> Result<PyParams> {
    if !(target_mean > 1.0 && target_mean < n as f64) {
        return Err(Error::Infeasible(alloc::format!(
            "target mean must lie in (1, {n}), got {target_mean}"
        )));
    }
    if !(target_sd > 0.0) {
        return Err(Error::Infeasible(alloc::format!(
            "target sd must be positive, got {target_sd}"
        )));
    }
    let sd_at = |discount: f64| -> Result<(f64, f64)> {
        let theta = strength_for_mean(discount, target_mean, n)?;
        let sd = cluster_count_moments(&PyParams::new(discount, theta)?, n).1;
        Ok((sd, theta))
    };
    let mut lo = 0.0;
    let mut hi = 1.0 - 1e-6;
    let (sd_lo, _) = sd_at(lo)?;
    let (sd_hi, _) = sd_at(hi)?;
    if target_sd < sd_lo || target_sd > sd_hi {
        return Err(Error::Infeasible(alloc::format!(
            "sd {target_sd} outside the attainable range [{sd_lo:.4}, {sd_hi:.4}] at mean {target_mean}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sd_at(mid)?.0 < target_sd {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let discount = 0.5 * (lo + hi);
    let theta = strength_for_mean(discount, target_mean, n)?;
    PyParams::new(discount, theta)
}
