//! Penalized additive spline regression and the general Bayesian update of
//! quantile draws.

mod basis;
mod bayes;
mod fit;

pub use basis::{bspline_basis, difference_penalty, Lambda, SplineBasis, SplineSpec};
pub use bayes::{
    general_bayes_update, CurveDraws, CurveSummary, RegressionDraws, CURVE_GRID_POINTS,
};
pub use fit::{
    select_lambda, AdditiveDesign, CovariateBasis, DesignSpec, PenalizedFit, Solver, LAMBDA_GRID,
};
