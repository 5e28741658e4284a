//! Conjugate full conditionals of μ_x, Σ_c and η, and the latent update.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{spd_inverse, symmetrize};
use crate::model::{BaseMeasure, ClusterAtom};
use crate::rng::RngStream;
use crate::sampling::{sample_inverse_wishart, sample_mvnormal};

use super::kernel::{sample_latent, AtomKernel, LatentMoments};

/// One cluster member: its current latent response and covariates.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub latent: f64,
    pub x: &'a DVector<f64>,
}

/// Mean and covariance of a Gaussian full conditional.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// μ_x | rest ~ N(m, M) with M = (nΣ_c⁻¹ + Σ_x0⁻¹)⁻¹ and
/// m = M[Σ_c⁻¹ Σ(x_i − η(y*_i − μ_y)/σ_y²) + Σ_x0⁻¹μ_x0].
pub fn mu_x_moments(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
) -> Result<GaussianMoments> {
    let c_inv = spd_inverse(&atom.sigma_c, "Sigma_c")?;
    let x0_inv = spd_inverse(&base.sigma_x0, "Sigma_x0")?;
    let mut adjusted = DVector::zeros(atom.dim());
    for m in members {
        adjusted += m.x - &atom.eta * ((m.latent - atom.mu_y) / atom.sigma2_y);
    }
    let cov = spd_inverse(&(&c_inv * members.len() as f64 + &x0_inv), "mu_x precision")?;
    let mean = &cov * (&c_inv * adjusted + &x0_inv * &base.mu_x0);
    Ok(GaussianMoments { mean, cov })
}

/// Σ_c | rest ~ IW(n0 + n, S0 + Σ e_i e_i'), e_i = x_i − μ_x − η(y*_i − μ_y)/σ_y².
pub fn sigma_c_posterior(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
) -> (f64, DMatrix<f64>) {
    let mut scale = base.s0.clone();
    for m in members {
        let e = m.x - &atom.mu_x - &atom.eta * ((m.latent - atom.mu_y) / atom.sigma2_y);
        scale += &e * e.transpose();
    }
    (base.n0 + members.len() as f64, symmetrize(&scale))
}

/// η | rest ~ N(b, B) with B = (σ⁻⁴ Σd_i² Σ_c⁻¹ + Σ_η0⁻¹)⁻¹ and
/// b = B[σ⁻² Σ d_i Σ_c⁻¹(x_i − μ_x) + Σ_η0⁻¹μ_η0], d_i = y*_i − μ_y.
pub fn eta_moments(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
) -> Result<GaussianMoments> {
    let c_inv = spd_inverse(&atom.sigma_c, "Sigma_c")?;
    let e0_inv = spd_inverse(&base.sigma_eta0, "Sigma_eta0")?;
    let s2 = atom.sigma2_y;
    let mut sum_d2 = 0.0;
    let mut cross = DVector::zeros(atom.dim());
    for m in members {
        let d = m.latent - atom.mu_y;
        sum_d2 += d * d;
        cross += (m.x - &atom.mu_x) * d;
    }
    let cov = spd_inverse(&(&c_inv * (sum_d2 / (s2 * s2)) + &e0_inv), "eta precision")?;
    let mean = &cov * (&c_inv * cross / s2 + &e0_inv * &base.mu_eta0);
    Ok(GaussianMoments { mean, cov })
}

pub fn update_mu_x(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let g = mu_x_moments(members, atom, base)?;
    sample_mvnormal(&g.mean, &g.cov, rng)
}

pub fn update_sigma_c(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let (dof, scale) = sigma_c_posterior(members, atom, base);
    sample_inverse_wishart(dof, &scale, rng)
}

pub fn update_eta(
    members: &[Member<'_>],
    atom: &ClusterAtom,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let g = eta_moments(members, atom, base)?;
    sample_mvnormal(&g.mean, &g.cov, rng)
}

/// New y*_i on (y_i − 1, y_i] given the observation's atom.
pub fn update_latent(
    y: u64,
    x: &DVector<f64>,
    atom: &ClusterAtom,
    form: LatentMoments,
    rng: &mut RngStream,
) -> Result<f64> {
    sample_latent(y, x, &AtomKernel::new(atom)?, form, rng)
}
