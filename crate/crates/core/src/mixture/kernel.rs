//! The truncated-normal joint kernel of (y*, x) and its factorization
//! k(y*, x) = TN(y*; μ_y, σ_y², y* > -1) · N(x; μ_x + η(y* − μ_y)/σ_y², Σ_c).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det, Chol};
use crate::model::ClusterAtom;
use crate::rng::RngStream;
use crate::sampling::{sample_truncated_normal, Interval};
use crate::special::{log_normal_sf, normal_ln_pdf};

/// Lower truncation point of the latent response.
pub const LATENT_LOWER: f64 = -1.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Which moments to use for y* | x within a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatentMoments {
    /// Completing the square on the factorized kernel: variance
    /// σ⁴/(σ² + a) and mean μ + σ²/(σ² + a)·η'Σ_c⁻¹(x − μ_x), a = η'Σ_c⁻¹η.
    #[default]
    Derived,
    /// Mean μ + η'Σ_c⁻¹(x − μ_x) and variance σ² − a, as printed in the
    /// original sampler description. Fails when σ² ≤ a.
    Printed,
}

/// Per-atom quantities cached for repeated kernel evaluation.
#[derive(Debug, Clone)]
pub struct AtomKernel {
    pub mu_y: f64,
    pub sigma2_y: f64,
    pub sigma_y: f64,
    pub mu_x: DVector<f64>,
    pub eta: DVector<f64>,
    chol_c: Chol,
    log_det_c: f64,
    /// Σ_c⁻¹η
    cinv_eta: DVector<f64>,
    /// η'Σ_c⁻¹η
    a: f64,
    /// log P(y* > -1) under the marginal N(μ_y, σ_y²)
    log_trunc: f64,
}

impl AtomKernel {
    pub fn new(atom: &ClusterAtom) -> Result<Self> {
        if !(atom.sigma2_y > 0.0 && atom.sigma2_y.is_finite()) {
            return Err(Error::Numerical(alloc::format!(
                "sigma2_y = {}",
                atom.sigma2_y
            )));
        }
        let chol_c = cholesky(&atom.sigma_c, "Sigma_c")?;
        let cinv_eta = chol_c.solve(&atom.eta);
        let a = atom.eta.dot(&cinv_eta);
        let sigma_y = atom.sigma2_y.sqrt();
        Ok(Self {
            mu_y: atom.mu_y,
            sigma2_y: atom.sigma2_y,
            sigma_y,
            mu_x: atom.mu_x.clone(),
            eta: atom.eta.clone(),
            log_det_c: log_det(&chol_c),
            chol_c,
            cinv_eta,
            a,
            log_trunc: log_normal_sf((LATENT_LOWER - atom.mu_y) / sigma_y),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu_x.len()
    }

    /// η'Σ_c⁻¹η
    pub fn eta_quad(&self) -> f64 {
        self.a
    }

    /// log P(y* > -1) for the unconditioned latent marginal.
    pub fn log_trunc(&self) -> f64 {
        self.log_trunc
    }

    fn log_normal_c(&self, resid: &DVector<f64>) -> f64 {
        let z = self
            .chol_c
            .l_dirty()
            .solve_lower_triangular(resid)
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det_c + z.norm_squared())
    }

    /// log k(y*, x); -∞ when y* ≤ -1.
    pub fn log_kernel(&self, latent: f64, x: &DVector<f64>) -> f64 {
        if !(latent > LATENT_LOWER) {
            return f64::NEG_INFINITY;
        }
        let d = latent - self.mu_y;
        let log_y = normal_ln_pdf(d / self.sigma_y) - 0.5 * self.sigma2_y.ln() - self.log_trunc;
        let resid = x - &self.mu_x - &self.eta * (d / self.sigma2_y);
        log_y + self.log_normal_c(&resid)
    }

    /// log N(x; μ_x, Σ_x) with Σ_x = Σ_c + ηη'/σ_y², via the determinant
    /// lemma and Sherman-Morrison on the cached factor of Σ_c.
    pub fn log_marginal_x(&self, x: &DVector<f64>) -> f64 {
        let r = x - &self.mu_x;
        let z = self
            .chol_c
            .l_dirty()
            .solve_lower_triangular(&r)
            .expect("cholesky factor has a positive diagonal");
        let s = self.cinv_eta.dot(&r);
        let quad = z.norm_squared() - s * s / (self.sigma2_y + self.a);
        let log_det_x = self.log_det_c + (self.a / self.sigma2_y).ln_1p();
        -0.5 * (self.dim() as f64 * LN_2PI + log_det_x + quad)
    }

    /// Untruncated moments (mean, variance) of y* given x.
    pub fn conditional_moments(&self, x: &DVector<f64>, form: LatentMoments) -> Result<(f64, f64)> {
        let s = self.cinv_eta.dot(&(x - &self.mu_x));
        match form {
            LatentMoments::Derived => {
                let denom = self.sigma2_y + self.a;
                Ok((
                    self.mu_y + self.sigma2_y * s / denom,
                    self.sigma2_y * self.sigma2_y / denom,
                ))
            }
            LatentMoments::Printed => {
                let v = self.sigma2_y - self.a;
                if !(v > 0.0) {
                    return Err(Error::Numerical(alloc::format!(
                        "printed latent variance sigma2_y - eta'Sigma_c^-1 eta = {v} is not positive"
                    )));
                }
                Ok((self.mu_y + s, v))
            }
        }
    }
}

/// Draw y* from the component's conditional given x, restricted to the
/// count cell (g − 1, g].
pub fn sample_latent(
    y: u64,
    x: &DVector<f64>,
    kernel: &AtomKernel,
    form: LatentMoments,
    rng: &mut RngStream,
) -> Result<f64> {
    let (m, v) = kernel.conditional_moments(x, form)?;
    sample_truncated_normal(m, v.sqrt(), &Interval::count_cell(y), rng)
}

/// Joint draw (y*, x) from the truncated kernel.
pub fn sample_kernel(kernel: &AtomKernel, rng: &mut RngStream) -> Result<(f64, DVector<f64>)> {
    let region = Interval::new(LATENT_LOWER, f64::INFINITY)?;
    let latent = sample_truncated_normal(kernel.mu_y, kernel.sigma_y, &region, rng)?;
    let mean = &kernel.mu_x + &kernel.eta * ((latent - kernel.mu_y) / kernel.sigma2_y);
    let z = DVector::from_iterator(
        kernel.dim(),
        (0..kernel.dim()).map(|_| crate::sampling::sample_standard_normal(rng)),
    );
    Ok((latent, mean + kernel.chol_c.l() * z))
}
