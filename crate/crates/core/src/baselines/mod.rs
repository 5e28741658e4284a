//! Comparison methods: the continuous-Poisson three-step estimator, a
//! multi-jitter quantile regression, and the ISE metric.

mod cpoisson;
mod glm;
mod ise;
mod jitter;
mod threestep;

pub use cpoisson::{cpoisson_quantile, cpoisson_quantile_tail};
pub use glm::{fit_poisson_additive, fit_poisson_glm, GlmFit, GLM_MAX_ITER};
pub use ise::{integrated_squared_error, interpolate, relative_ise, CurveComparison};
pub use jitter::{check_loss_fit, jitter_quantile_fit, smoothed_check_loss, JitterOptions};
pub use threestep::{continuous_poisson_three_step, BaselineCurve};
