//! Joint-distribution checks of the sampler on a 10-observation problem.

use countquant_core::diagnostics::ks_two_sample;
use countquant_core::mixture::geweke::{
    marginal_conditional, successive_conditional, GewekeSample,
};
use countquant_core::mixture::{AssignmentScheme, ChainOptions, MuSigmaConditional, Schedule};
use countquant_core::model::{BaseMeasure, PyParams};
use countquant_core::RngStream;
use nalgebra::{DMatrix, DVector};

const N: usize = 10;
const DRAWS: usize = 5000;

fn base() -> BaseMeasure {
    BaseMeasure {
        mu_y0: 3.0,
        sigma2_y0: 4.0,
        k0: 3.0,
        t0: 4.0,
        mu_x0: DVector::from_vec(vec![0.0]),
        sigma_x0: DMatrix::identity(1, 1),
        n0: 4.0,
        s0: DMatrix::identity(1, 1),
        mu_eta0: DVector::from_vec(vec![0.0]),
        sigma_eta0: DMatrix::identity(1, 1),
    }
}

fn run(options: ChainOptions, thin: usize) -> (GewekeSample, GewekeSample) {
    let py = PyParams::new(0.3, 1.0).unwrap();
    let prior = marginal_conditional(N, &base(), &py, DRAWS, &mut RngStream::new(5, 0)).unwrap();
    let chain = successive_conditional(
        N,
        &base(),
        &py,
        Schedule::new(0, 1, 1),
        options,
        DRAWS,
        thin,
        RngStream::new(5, 1),
    )
    .unwrap();
    (prior, chain)
}

#[test]
fn printed_mu_sigma_conditional_is_detected() {
    let opts = ChainOptions {
        mu_sigma: MuSigmaConditional::LatentOnly,
        ..ChainOptions::default()
    };
    let (f, s) = run(opts, 10);
    let p = ks_two_sample(&f.sigma_c, &s.sigma_c).p_value;
    assert!(p < 1e-4, "{p}");
}

#[test]
fn shared_urn_assignment_is_detected() {
    let opts = ChainOptions {
        assignment: AssignmentScheme::SharedUrn,
        ..ChainOptions::default()
    };
    let (f, s) = run(opts, 10);
    let p = ks_two_sample(&f.k, &s.k).p_value;
    assert!(p < 1e-4, "{p}");
}

#[test]
fn default_sampler_covariate_margins() {
    let (f, s) = run(ChainOptions::default(), 20);
    for (name, a, b) in [
        ("mu_x", &f.mu_x, &s.mu_x),
        ("sigma_c", &f.sigma_c, &s.sigma_c),
        ("eta", &f.eta, &s.eta),
    ] {
        let p = ks_two_sample(a, b).p_value;
        assert!(p > 0.01, "{name}: p = {p}");
    }
}
