//! Joint-distribution test of the sampler: draws of (partition, atoms) from
//! the prior are compared with a chain that alternates one sweep given the
//! data and a fresh draw of the data given the state.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{BaseMeasure, ClusterAtom, Dataset, PyParams};
use crate::rng::RngStream;

use super::chain::{ChainOptions, Sampler, Schedule};
use super::kernel::{sample_kernel, AtomKernel};
use super::state::{MhPhase, SamplerState};

/// Recorded functionals: the atom of observation 0 and K_N.
#[derive(Debug, Clone, Default)]
pub struct GewekeSample {
    pub mu_y: Vec<f64>,
    pub sigma2_y: Vec<f64>,
    pub k: Vec<f64>,
    /// First coordinates of μ_x, Σ_c and η of observation 0's atom.
    pub mu_x: Vec<f64>,
    pub sigma_c: Vec<f64>,
    pub eta: Vec<f64>,
}

impl GewekeSample {
    fn record(&mut self, state: &SamplerState) {
        let a = &state.atoms[state.assignments[0]];
        self.mu_y.push(a.mu_y);
        self.sigma2_y.push(a.sigma2_y);
        self.k.push(state.k() as f64);
        self.mu_x.push(a.mu_x[0]);
        self.sigma_c.push(a.sigma_c[(0, 0)]);
        self.eta.push(a.eta[0]);
    }
}

/// Partition labels from the sequential PY urn.
pub fn sample_partition(py: &PyParams, n: usize, rng: &mut RngStream) -> Vec<usize> {
    let (phi, theta) = (py.discount(), py.strength());
    let mut labels = vec![0usize];
    let mut counts = vec![1usize];
    for m in 1..n {
        let mut u = rng.uniform_open() * (theta + m as f64);
        let mut pick = counts.len();
        for (j, &c) in counts.iter().enumerate() {
            let w = c as f64 - phi;
            if u < w {
                pick = j;
                break;
            }
            u -= w;
        }
        if pick == counts.len() {
            counts.push(0);
        }
        counts[pick] += 1;
        labels.push(pick);
    }
    labels
}

/// Draw latents and covariates for every observation from its atom, and
/// round the latents to counts.
fn generate_data(
    state: &mut SamplerState,
    columns: &[alloc::string::String],
    p: usize,
    rng: &mut RngStream,
) -> Result<Dataset> {
    let kernels = state
        .atoms
        .iter()
        .map(AtomKernel::new)
        .collect::<Result<Vec<_>>>()?;
    let n = state.n();
    let mut y = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let (ys, xi) = sample_kernel(&kernels[state.assignments[i]], rng)?;
        state.latent[i] = ys;
        y.push(libm::ceil(ys).max(0.0) as u64);
        x.set_row(i, &xi.transpose());
    }
    Dataset::new(y, x, columns.to_vec())
}

fn prior_state(
    n: usize,
    base: &BaseMeasure,
    py: &PyParams,
    rng: &mut RngStream,
) -> Result<SamplerState> {
    let assignments = sample_partition(py, n, rng);
    let k = assignments.iter().max().unwrap() + 1;
    let atoms = (0..k)
        .map(|_| base.sample(rng))
        .collect::<Result<Vec<ClusterAtom>>>()?;
    let mut counts = vec![0; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    Ok(SamplerState {
        assignments,
        atoms,
        counts,
        latent: vec![0.0; n],
        iteration: 0,
        phase: MhPhase::RandomWalk,
        rw_step: 0.1,
    })
}

/// Independent draws from the prior.
pub fn marginal_conditional(
    n: usize,
    base: &BaseMeasure,
    py: &PyParams,
    reps: usize,
    rng: &mut RngStream,
) -> Result<GewekeSample> {
    let mut out = GewekeSample::default();
    for _ in 0..reps {
        out.record(&prior_state(n, base, py, rng)?);
    }
    Ok(out)
}

/// Successive-conditional simulator: `draws` records, `thin` sweeps apart.
/// Its stationary law equals the prior exactly when every sweep leaves the
/// posterior invariant.
pub fn successive_conditional(
    n: usize,
    base: &BaseMeasure,
    py: &PyParams,
    schedule: Schedule,
    options: ChainOptions,
    draws: usize,
    thin: usize,
    mut rng: RngStream,
) -> Result<GewekeSample> {
    let p = base.dim();
    let columns: Vec<_> = (1..=p).map(|j| alloc::format!("x{j}")).collect();
    let mut state = prior_state(n, base, py, &mut rng)?;
    state.rw_step = options.rw_step;
    let mut data = generate_data(&mut state, &columns, p, &mut rng)?;
    let mut sampler = Sampler::with_state(base, py, schedule, options, state, rng);
    let mut out = GewekeSample::default();
    for _ in 0..draws {
        for _ in 0..thin {
            sampler.step(&data)?;
            let mut rng = sampler.rng_mut().clone();
            data = generate_data(sampler.state_mut(), &columns, p, &mut rng)?;
            *sampler.rng_mut() = rng;
        }
        out.record(sampler.state());
    }
    Ok(out)
}
