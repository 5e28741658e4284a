//! Metropolis-Hastings update of (μ_y, σ_y²).
//!
//! The full conditional is
//! Π_i N(y*_i; μ, σ²)/Φ̄((−1 − μ)/σ) N(x_i; μ_x + η(y*_i − μ)/σ², Σ_c)
//! × N(μ; μ_y0, σ²_y0) × IG(σ²; k0, t0), sampled on (μ, ω = log σ²) by a random walk early on and by
//! acceptance-rejection Metropolis-Hastings (ARMH) with a Laplace proposal
//! later.

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::model::{BaseMeasure, ClusterAtom};
use crate::rng::RngStream;
use crate::sampling::{sample_inverse_gamma, sample_standard_normal};
use crate::special::{log_normal_sf, normal_ln_pdf};

use super::kernel::LATENT_LOWER;
use super::state::MhPhase;
use super::updates::Member;

const NEWTON_STEPS: usize = 20;
const MAX_AR_TRIALS: usize = 200;
const FD_STEP: f64 = 1e-5;

/// Which factors of the kernel enter the (μ_y, σ_y²) full conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSigmaConditional {
    /// Truncated-normal margin and the covariate regression on y*, both of
    /// which depend on (μ_y, σ_y²).
    #[default]
    Full,
    /// Truncated-normal margin only, as printed in the original sampler
    /// description. Does not leave the posterior invariant when η ≠ 0.
    LatentOnly,
}

/// Log full conditional in (μ, ω) including the Jacobian of σ² = e^ω.
///
/// With b_i = η'Σ_c⁻¹(x_i − μ_x) and a = η'Σ_c⁻¹η the covariate factor
/// contributes Σ_i [b_i d_i/σ² − a d_i²/(2σ⁴)], d_i = y*_i − μ.
#[derive(Debug, Clone, Copy)]
pub struct MuSigmaTarget<'a> {
    pub latent: &'a [f64],
    pub mu0: f64,
    pub s2_0: f64,
    pub k0: f64,
    pub t0: f64,
    pub eta_quad: f64,
    pub b_sum: f64,
    pub by_sum: f64,
}

impl<'a> MuSigmaTarget<'a> {
    pub fn new(latent: &'a [f64], base: &BaseMeasure) -> Self {
        Self {
            latent,
            mu0: base.mu_y0,
            s2_0: base.sigma2_y0,
            k0: base.k0,
            t0: base.t0,
            eta_quad: 0.0,
            b_sum: 0.0,
            by_sum: 0.0,
        }
    }

    /// Add the covariate factor for `members` of `atom`; their latents must
    /// be the ones in `self.latent`, in the same order.
    pub fn with_covariates(mut self, members: &[Member<'_>], atom: &ClusterAtom) -> Result<Self> {
        let chol = cholesky(&atom.sigma_c, "Sigma_c")?;
        let cinv_eta = chol.solve(&atom.eta);
        self.eta_quad = atom.eta.dot(&cinv_eta);
        self.b_sum = 0.0;
        self.by_sum = 0.0;
        for m in members {
            let b = cinv_eta.dot(&(m.x - &atom.mu_x));
            self.b_sum += b;
            self.by_sum += b * m.latent;
        }
        Ok(self)
    }

    pub fn log_density(&self, mu: f64, omega: f64) -> f64 {
        let n = self.latent.len() as f64;
        let s2 = omega.exp();
        let ss: f64 = self.latent.iter().map(|y| (y - mu) * (y - mu)).sum();
        let t = (LATENT_LOWER - mu) / s2.sqrt();
        let cov = (self.by_sum - mu * self.b_sum) / s2 - 0.5 * self.eta_quad * ss / (s2 * s2);
        -0.5 * ss / s2
            - 0.5 * n * omega
            - n * log_normal_sf(t)
            - 0.5 * (mu - self.mu0).powi(2) / self.s2_0
            - self.k0 * omega
            - self.t0 / s2
            + cov
    }

    /// Gradient of [`Self::log_density`].
    pub fn gradient(&self, mu: f64, omega: f64) -> [f64; 2] {
        let n = self.latent.len() as f64;
        let s2 = omega.exp();
        let s = s2.sqrt();
        let (mut sd, mut ss) = (0.0, 0.0);
        for y in self.latent {
            sd += y - mu;
            ss += (y - mu) * (y - mu);
        }
        let t = (LATENT_LOWER - mu) / s;
        // inverse Mills ratio of the upper tail
        let mills = (normal_ln_pdf(t) - log_normal_sf(t)).exp();
        let s4 = s2 * s2;
        [
            sd / s2 - n * mills / s - (mu - self.mu0) / self.s2_0 - self.b_sum / s2
                + self.eta_quad * sd / s4,
            0.5 * ss / s2 - 0.5 * n - 0.5 * n * mills * t - self.k0 + self.t0 / s2
                - (self.by_sum - mu * self.b_sum) / s2
                + self.eta_quad * ss / s4,
        ]
    }

    fn hessian(&self, mu: f64, omega: f64) -> [[f64; 2]; 2] {
        let gp = self.gradient(mu + FD_STEP, omega);
        let gm = self.gradient(mu - FD_STEP, omega);
        let hp = self.gradient(mu, omega + FD_STEP);
        let hm = self.gradient(mu, omega - FD_STEP);
        let h00 = (gp[0] - gm[0]) / (2.0 * FD_STEP);
        let h11 = (hp[1] - hm[1]) / (2.0 * FD_STEP);
        let h01 = 0.25 * ((gp[1] - gm[1]) + (hp[0] - hm[0])) / FD_STEP;
        [[h00, h01], [h01, h11]]
    }

    /// Mode and negative inverse Hessian by damped Newton from a fixed start.
    pub fn laplace(&self) -> Result<([f64; 2], [[f64; 2]; 2])> {
        let n = self.latent.len() as f64;
        let mean = self.latent.iter().sum::<f64>() / n.max(1.0);
        let var = self.latent.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n.max(1.0);
        let mut x = [mean, (var + self.t0 / (self.k0 + 1.0)).ln()];
        let mut f = self.log_density(x[0], x[1]);
        if !f.is_finite() {
            return Err(Error::Numerical("ARMH: non-finite start".into()));
        }
        let mut converged = false;
        for _ in 0..NEWTON_STEPS {
            let g = self.gradient(x[0], x[1]);
            let h = self.hessian(x[0], x[1]);
            let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
            let step = if h[0][0] < 0.0 && det > 0.0 {
                [
                    (h[1][1] * g[0] - h[0][1] * g[1]) / det,
                    (h[0][0] * g[1] - h[0][1] * g[0]) / det,
                ]
            } else {
                // not locally concave: plain gradient ascent scaled by the curvature guess
                [-g[0] * 0.1, -g[1] * 0.1]
            };
            let mut scale = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let cand = [x[0] - scale * step[0], x[1] - scale * step[1]];
                let fc = self.log_density(cand[0], cand[1]);
                if fc.is_finite() && fc >= f {
                    x = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                scale *= 0.5;
            }
            let g = self.gradient(x[0], x[1]);
            if g[0].abs() + g[1].abs() < 1e-8 * (1.0 + n) {
                converged = true;
                break;
            }
            if !moved {
                break;
            }
        }
        let h = self.hessian(x[0], x[1]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[0][1];
        if !converged || !(h[0][0] < 0.0 && det > 0.0) {
            return Err(Error::NoConvergence("ARMH mode search".into()));
        }
        let cov = [
            [-h[1][1] / det, h[0][1] / det],
            [h[0][1] / det, -h[0][0] / det],
        ];
        Ok((x, cov))
    }
}

/// Outcome of one (μ_y, σ_y²) transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhOutcome {
    pub mu_y: f64,
    pub sigma2_y: f64,
    pub accepted: bool,
    /// Transition actually used; ARMH falls back to the random walk when the
    /// normal approximation cannot be built.
    pub phase: MhPhase,
    pub fell_back: bool,
}

struct Laplace {
    mean: [f64; 2],
    chol: [[f64; 2]; 2],
    log_det: f64,
    log_c: f64,
}

impl Laplace {
    fn new(target: &MuSigmaTarget<'_>) -> Result<Self> {
        let (mean, cov) = target.laplace()?;
        let l00 = cov[0][0].sqrt();
        let l10 = cov[0][1] / l00;
        let l11 = (cov[1][1] - l10 * l10).sqrt();
        if !(l00 > 0.0 && l11 > 0.0) {
            return Err(Error::Numerical("ARMH covariance".into()));
        }
        let mut q = Self {
            mean,
            chol: [[l00, 0.0], [l10, l11]],
            log_det: 2.0 * (l00.ln() + l11.ln()),
            log_c: 0.0,
        };
        q.log_c = target.log_density(mean[0], mean[1]) - q.log_density(mean);
        Ok(q)
    }

    fn log_density(&self, x: [f64; 2]) -> f64 {
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        let z0 = d0 / self.chol[0][0];
        let z1 = (d1 - self.chol[1][0] * z0) / self.chol[1][1];
        -0.5 * (z0 * z0 + z1 * z1)
            - 0.5 * self.log_det
            - core::f64::consts::LN_2
            - core::f64::consts::PI.ln()
    }

    fn draw(&self, rng: &mut RngStream) -> [f64; 2] {
        let z0 = sample_standard_normal(rng);
        let z1 = sample_standard_normal(rng);
        [
            self.mean[0] + self.chol[0][0] * z0,
            self.mean[1] + self.chol[1][0] * z0 + self.chol[1][1] * z1,
        ]
    }

    fn log_envelope(&self, x: [f64; 2]) -> f64 {
        self.log_c + self.log_density(x)
    }
}

fn random_walk(
    target: &MuSigmaTarget<'_>,
    mu: f64,
    omega: f64,
    step: f64,
    rng: &mut RngStream,
) -> (f64, f64, bool) {
    let cand = [
        mu + step * sample_standard_normal(rng),
        omega + step * sample_standard_normal(rng),
    ];
    let log_ratio = target.log_density(cand[0], cand[1]) - target.log_density(mu, omega);
    if rng.uniform_open().ln() < log_ratio {
        (cand[0], cand[1], true)
    } else {
        (mu, omega, false)
    }
}

fn armh(
    target: &MuSigmaTarget<'_>,
    q: &Laplace,
    mu: f64,
    omega: f64,
    rng: &mut RngStream,
) -> Option<(f64, f64, bool)> {
    // acceptance-rejection stage: candidate from the envelope min(π, c q)
    let mut cand = None;
    for _ in 0..MAX_AR_TRIALS {
        let x = q.draw(rng);
        let lp = target.log_density(x[0], x[1]);
        let le = q.log_envelope(x);
        if rng.uniform_open().ln() < (lp - le).min(0.0) {
            cand = Some((x, lp, le));
            break;
        }
    }
    let (x, lp_new, le_new) = cand?;
    let lp_old = target.log_density(mu, omega);
    let le_old = q.log_envelope([mu, omega]);
    // α = π(x') min(π(x), cq(x)) / [π(x) min(π(x'), cq(x'))]
    let log_alpha = lp_new + lp_old.min(le_old) - lp_old - lp_new.min(le_new);
    if rng.uniform_open().ln() < log_alpha {
        Some((x[0], x[1], true))
    } else {
        Some((mu, omega, false))
    }
}

/// One transition of (μ_y, σ_y²) targeting `target`. An empty cluster draws
/// from the prior.
pub fn update_mu_sigma_y(
    target: &MuSigmaTarget<'_>,
    mu_y: f64,
    sigma2_y: f64,
    phase: MhPhase,
    rw_step: f64,
    rng: &mut RngStream,
) -> Result<MhOutcome> {
    let latent = target.latent;
    if latent.is_empty() {
        return Ok(MhOutcome {
            mu_y: target.mu0 + target.s2_0.sqrt() * sample_standard_normal(rng),
            sigma2_y: sample_inverse_gamma(target.k0, target.t0, rng)?,
            accepted: true,
            phase,
            fell_back: false,
        });
    }
    let omega = sigma2_y.ln();
    if phase == MhPhase::AcceptanceRejection {
        if let Ok(q) = Laplace::new(target) {
            if let Some((m, w, accepted)) = armh(target, &q, mu_y, omega, rng) {
                return Ok(MhOutcome {
                    mu_y: m,
                    sigma2_y: w.exp(),
                    accepted,
                    phase,
                    fell_back: false,
                });
            }
        }
        log::debug!(
            "ARMH unavailable for a cluster of size {}; using random walk",
            latent.len()
        );
    }
    let (m, w, accepted) = random_walk(target, mu_y, omega, rw_step, rng);
    Ok(MhOutcome {
        mu_y: m,
        sigma2_y: w.exp(),
        accepted,
        phase: MhPhase::RandomWalk,
        fell_back: phase == MhPhase::AcceptanceRejection,
    })
}
