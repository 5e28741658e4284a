//! Gibbs sampler for the Pitman-Yor mixture.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BaseMeasure, ClusterAtom, Dataset, PyParams};
use crate::rng::RngStream;
use crate::sampling::sample_log_categorical;

use super::draw::PosteriorDraw;
use super::kernel::{sample_latent, AtomKernel, LatentMoments};
use super::mh::{update_mu_sigma_y, MuSigmaConditional, MuSigmaTarget};
use super::state::{init_state, MhPhase, SamplerState};
use super::updates::{update_eta, update_mu_x, update_sigma_c, Member};
use super::urn::{dirichlet_weights, fresh_atoms_for, sample_fresh_atoms, sample_mixture_weights};

/// Iteration plan of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub burn_in: usize,
    /// Post-burn-in iterations.
    pub iterations: usize,
    pub thin: usize,
    /// Number of fresh-atom urn draws per iteration.
    pub m: usize,
    /// Iteration at which (μ_y, σ_y²) switches from the random walk to ARMH;
    /// defaults to burn_in / 2.
    pub rw_switch: Option<usize>,
}

impl Schedule {
    pub fn new(burn_in: usize, iterations: usize, thin: usize) -> Self {
        Self {
            burn_in,
            iterations,
            thin,
            m: 10,
            rw_switch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.thin == 0 || self.m == 0 {
            return Err(Error::domain(
                "schedule needs positive iterations, thin and M",
            ));
        }
        Ok(())
    }

    pub fn switch_iteration(&self) -> usize {
        self.rw_switch.unwrap_or(self.burn_in / 2)
    }

    pub fn retained(&self) -> usize {
        self.iterations / self.thin
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::new(2000, 20_000, 10)
    }
}

/// How observations are reassigned given the Dirichlet weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentScheme {
    /// One observation at a time with G integrated out, fresh values
    /// explored through M auxiliary draws from G0. Exact for any M.
    #[default]
    Marginal,
    /// Importance conditional sampling: weights (π₀, π_1..π_K) are drawn
    /// given the partition and every observation chooses among the occupied
    /// atoms and the same M urn draws from the remainder, each with weight
    /// π₀ m_h/M. The finite-M importance approximation biases the partition.
    SharedUrn,
}

/// Sampler switches that do not change the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    /// Replace the likelihood by a constant: the chain then targets the prior.
    pub prior_only: bool,
    pub latent_moments: LatentMoments,
    pub assignment: AssignmentScheme,
    pub mu_sigma: MuSigmaConditional,
    pub rw_step: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            prior_only: false,
            latent_moments: LatentMoments::Derived,
            assignment: AssignmentScheme::Marginal,
            mu_sigma: MuSigmaConditional::Full,
            rw_step: 0.1,
        }
    }
}

/// Acceptance counts of the (μ_y, σ_y²) updates and assignment fallbacks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub rw_proposals: u64,
    pub rw_accepted: u64,
    pub ar_proposals: u64,
    pub ar_accepted: u64,
    pub ar_fallbacks: u64,
    pub degenerate_assignments: u64,
}

impl ChainDiagnostics {
    pub fn rw_rate(&self) -> f64 {
        self.rw_accepted as f64 / self.rw_proposals.max(1) as f64
    }

    pub fn ar_rate(&self) -> f64 {
        self.ar_accepted as f64 / self.ar_proposals.max(1) as f64
    }

    pub fn merge(&mut self, other: &Self) {
        self.rw_proposals += other.rw_proposals;
        self.rw_accepted += other.rw_accepted;
        self.ar_proposals += other.ar_proposals;
        self.ar_accepted += other.ar_accepted;
        self.ar_fallbacks += other.ar_fallbacks;
        self.degenerate_assignments += other.degenerate_assignments;
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    /// K_N at each retained iteration.
    pub cluster_counts: Vec<usize>,
    pub diagnostics: ChainDiagnostics,
}

/// Reassign every observation among the occupied and fresh atoms of `draw`
/// and rebuild the atom table from the components that received members.
/// Returns the number of observations whose masses all underflowed.
pub fn assign_clusters(
    data: &Dataset,
    state: &mut SamplerState,
    draw: &PosteriorDraw,
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<usize> {
    let comps: Vec<(f64, &ClusterAtom)> = draw.components().collect();
    let log_w: Vec<f64> = comps.iter().map(|(w, _)| w.ln()).collect();
    let kernels = if prior_only {
        Vec::new()
    } else {
        comps
            .iter()
            .map(|(_, a)| AtomKernel::new(a))
            .collect::<Result<Vec<_>>>()?
    };
    let mut labels = vec![0usize; data.n()];
    let mut masses = vec![0.0; comps.len()];
    let mut degenerate = 0;
    for (i, label) in labels.iter_mut().enumerate() {
        for (c, m) in masses.iter_mut().enumerate() {
            *m = if prior_only {
                log_w[c]
            } else {
                log_w[c] + kernels[c].log_kernel(state.latent[i], data.row(i))
            };
        }
        *label = match sample_log_categorical(&masses, rng) {
            Some(c) => c,
            None => {
                degenerate += 1;
                nearest(&comps, state.latent[i], data.row(i))
            }
        };
    }
    if degenerate > 0 {
        log::warn!("{degenerate} observations had no positive assignment mass; used nearest atom");
    }
    state.atoms = comps.iter().map(|(_, a)| (*a).clone()).collect();
    state.assignments = labels;
    state.relabel();
    Ok(degenerate)
}

/// Reassignment with G integrated out (Neal's Algorithm 8 under the PY urn):
/// observation i joins cluster k with weight (n_k − φ)k(z_i; θ_k) or a fresh
/// value with weight (ϑ + φK)/M · k(z_i; ϑ_h) for M auxiliary draws from G0,
/// the first of which is the current value when i is a singleton. Returns the
/// number of observations whose masses all underflowed.
pub fn assign_marginal(
    data: &Dataset,
    state: &mut SamplerState,
    py: &PyParams,
    base: &BaseMeasure,
    m: usize,
    prior_only: bool,
    rng: &mut RngStream,
) -> Result<usize> {
    let (phi, theta) = (py.discount(), py.strength());
    let mut atoms: Vec<(ClusterAtom, Option<AtomKernel>)> = core::mem::take(&mut state.atoms)
        .into_iter()
        .map(|a| {
            let k = if prior_only {
                None
            } else {
                Some(AtomKernel::new(&a)?)
            };
            Ok((a, k))
        })
        .collect::<Result<_>>()?;
    let mut counts = core::mem::take(&mut state.counts);
    let mut labels = core::mem::take(&mut state.assignments);
    let log_k = |kern: &Option<AtomKernel>, i: usize| {
        kern.as_ref()
            .map_or(0.0, |k| k.log_kernel(state.latent[i], data.row(i)))
    };
    // without a likelihood the auxiliary draws are exchangeable: one
    // carrying the whole fresh mass is equivalent and far cheaper
    let m_aux = if prior_only { 1 } else { m.max(1) };
    let mut masses = Vec::with_capacity(atoms.len() + m_aux);
    let mut degenerate = 0;
    for i in 0..data.n() {
        let c = labels[i];
        counts[c] -= 1;
        let mut aux = Vec::with_capacity(m_aux);
        if counts[c] == 0 {
            aux.push(atoms.swap_remove(c));
            counts.swap_remove(c);
            let moved = atoms.len();
            for l in labels.iter_mut() {
                if *l == moved {
                    *l = c;
                }
            }
        }
        while aux.len() < m_aux {
            let a = base.sample(rng)?;
            let k = if prior_only {
                None
            } else {
                Some(AtomKernel::new(&a)?)
            };
            aux.push((a, k));
        }
        let k_now = atoms.len();
        masses.clear();
        for (j, (_, kern)) in atoms.iter().enumerate() {
            masses.push((counts[j] as f64 - phi).ln() + log_k(kern, i));
        }
        let ln_fresh = ((theta + phi * k_now as f64) / m_aux as f64).ln();
        for (_, kern) in &aux {
            masses.push(ln_fresh + log_k(kern, i));
        }
        let pick = match sample_log_categorical(&masses, rng) {
            Some(p) => p,
            None => {
                degenerate += 1;
                let comps: Vec<(f64, &ClusterAtom)> = atoms
                    .iter()
                    .chain(aux.iter())
                    .map(|(a, _)| (1.0, a))
                    .collect();
                nearest(&comps, state.latent[i], data.row(i))
            }
        };
        labels[i] = if pick < k_now {
            counts[pick] += 1;
            pick
        } else {
            atoms.push(aux.swap_remove(pick - k_now));
            counts.push(1);
            k_now
        };
    }
    if degenerate > 0 {
        log::warn!("{degenerate} observations had no positive assignment mass; used nearest atom");
    }
    state.atoms = atoms.into_iter().map(|(a, _)| a).collect();
    state.counts = counts;
    state.assignments = labels;
    state.relabel();
    Ok(degenerate)
}

fn nearest(comps: &[(f64, &ClusterAtom)], latent: f64, x: &DVector<f64>) -> usize {
    let dist = |a: &ClusterAtom| {
        let r = x - &a.mu_x;
        let q = a
            .sigma_c
            .clone()
            .cholesky()
            .map(|c| crate::linalg::inv_quad_form(&r, &c))
            .unwrap_or(f64::INFINITY);
        q + (latent - a.mu_y).powi(2) / a.sigma2_y
    };
    (0..comps.len())
        .min_by(|&i, &j| dist(comps[i].1).total_cmp(&dist(comps[j].1)))
        .unwrap_or(0)
}

/// A running chain.
#[derive(Debug, Clone)]
pub struct Sampler {
    base: BaseMeasure,
    py: PyParams,
    schedule: Schedule,
    options: ChainOptions,
    state: SamplerState,
    rng: RngStream,
    diagnostics: ChainDiagnostics,
}

impl Sampler {
    pub fn new(
        data: &Dataset,
        base: &BaseMeasure,
        py: &PyParams,
        schedule: Schedule,
        options: ChainOptions,
        mut rng: RngStream,
    ) -> Result<Self> {
        schedule.validate()?;
        let mut state = init_state(data, base, py, &mut rng)?;
        state.rw_step = options.rw_step;
        Ok(Self::with_state(base, py, schedule, options, state, rng))
    }

    pub fn with_state(
        base: &BaseMeasure,
        py: &PyParams,
        schedule: Schedule,
        options: ChainOptions,
        state: SamplerState,
        rng: RngStream,
    ) -> Self {
        Self {
            base: base.clone(),
            py: *py,
            schedule,
            options,
            state,
            rng,
            diagnostics: ChainDiagnostics::default(),
        }
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SamplerState {
        &mut self.state
    }

    pub fn rng_mut(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    /// One full sweep: assignments, atom parameters, latent responses.
    pub fn step(&mut self, data: &Dataset) -> Result<()> {
        let iteration = self.state.iteration;
        self.sweep(data).map_err(|e| e.at_iteration(iteration))?;
        self.state.iteration += 1;
        self.state.phase = if self.state.iteration >= self.schedule.switch_iteration() {
            MhPhase::AcceptanceRejection
        } else {
            MhPhase::RandomWalk
        };
        #[cfg(debug_assertions)]
        self.state
            .check(data)
            .map_err(|e| e.at_iteration(iteration))?;
        Ok(())
    }

    fn sweep(&mut self, data: &Dataset) -> Result<()> {
        let rng = &mut self.rng;
        let prior_only = self.options.prior_only;
        let degenerate = match self.options.assignment {
            AssignmentScheme::Marginal => assign_marginal(
                data,
                &mut self.state,
                &self.py,
                &self.base,
                self.schedule.m,
                prior_only,
                rng,
            )?,
            AssignmentScheme::SharedUrn => {
                let (pi0, weights) = sample_mixture_weights(&self.state, &self.py, rng)?;
                let fresh =
                    sample_fresh_atoms(&self.state, &self.py, &self.base, self.schedule.m, rng)?;
                let draw = PosteriorDraw {
                    pi0,
                    weights,
                    atoms: core::mem::take(&mut self.state.atoms),
                    m: fresh.m(),
                    fresh_atoms: fresh.atoms,
                    multiplicities: fresh.multiplicities,
                };
                assign_clusters(data, &mut self.state, &draw, prior_only, rng)?
            }
        };
        self.diagnostics.degenerate_assignments += degenerate as u64;

        let members = self.state.members();
        for (c, idx) in members.iter().enumerate() {
            let (latent, group): (Vec<f64>, Vec<Member<'_>>) = if self.options.prior_only {
                (Vec::new(), Vec::new())
            } else {
                (
                    idx.iter().map(|&i| self.state.latent[i]).collect(),
                    idx.iter()
                        .map(|&i| Member {
                            latent: self.state.latent[i],
                            x: data.row(i),
                        })
                        .collect(),
                )
            };
            let atom = &mut self.state.atoms[c];
            let mut target = MuSigmaTarget::new(&latent, &self.base);
            if self.options.mu_sigma == MuSigmaConditional::Full {
                target = target.with_covariates(&group, atom)?;
            }
            let out = update_mu_sigma_y(
                &target,
                atom.mu_y,
                atom.sigma2_y,
                self.state.phase,
                self.state.rw_step,
                rng,
            )?;
            if !latent.is_empty() {
                match out.phase {
                    MhPhase::RandomWalk => {
                        self.diagnostics.rw_proposals += 1;
                        self.diagnostics.rw_accepted += out.accepted as u64;
                    }
                    MhPhase::AcceptanceRejection => {
                        self.diagnostics.ar_proposals += 1;
                        self.diagnostics.ar_accepted += out.accepted as u64;
                    }
                }
                self.diagnostics.ar_fallbacks += out.fell_back as u64;
            }
            atom.mu_y = out.mu_y;
            atom.sigma2_y = out.sigma2_y;
            atom.mu_x = update_mu_x(&group, atom, &self.base, rng)?;
            atom.sigma_c = update_sigma_c(&group, atom, &self.base, rng)?;
            atom.eta = update_eta(&group, atom, &self.base, rng)?;
        }

        if !self.options.prior_only {
            let kernels = self
                .state
                .atoms
                .iter()
                .map(AtomKernel::new)
                .collect::<Result<Vec<_>>>()?;
            for i in 0..data.n() {
                let k = &kernels[self.state.assignments[i]];
                self.state.latent[i] = sample_latent(
                    data.y()[i],
                    data.row(i),
                    k,
                    self.options.latent_moments,
                    rng,
                )?;
            }
        }
        Ok(())
    }

    /// Freeze the current state as a posterior draw of G, with fresh
    /// weights and remainder atoms drawn given the current partition.
    pub fn snapshot(&mut self) -> Result<PosteriorDraw> {
        let (pi0, weights) = dirichlet_weights(&self.state.counts, &self.py, &mut self.rng)?;
        let fresh = fresh_atoms_for(
            self.state.k(),
            &self.py,
            &self.base,
            self.schedule.m,
            &mut self.rng,
        )?;
        Ok(PosteriorDraw {
            pi0,
            weights,
            atoms: self.state.atoms.clone(),
            m: fresh.m(),
            fresh_atoms: fresh.atoms,
            multiplicities: fresh.multiplicities,
        })
    }
}

/// Run burn-in plus `iterations` sweeps and keep every `thin`-th draw.
pub fn run_chain(
    data: &Dataset,
    base: &BaseMeasure,
    py: &PyParams,
    schedule: Schedule,
    options: ChainOptions,
    rng: RngStream,
) -> Result<ChainOutput> {
    let mut sampler = Sampler::new(data, base, py, schedule, options, rng)?;
    for _ in 0..schedule.burn_in {
        sampler.step(data)?;
    }
    let mut draws = Vec::with_capacity(schedule.retained());
    let mut cluster_counts = Vec::with_capacity(schedule.retained());
    for t in 0..schedule.iterations {
        sampler.step(data)?;
        if (t + 1) % schedule.thin == 0 {
            cluster_counts.push(sampler.state.k());
            let it = sampler.state.iteration;
            draws.push(sampler.snapshot().map_err(|e| e.at_iteration(it))?);
        }
    }
    log::info!(
        "chain done: RWMH acceptance {:.3}, ARMH acceptance {:.3}, {} ARMH fallbacks",
        sampler.diagnostics.rw_rate(),
        sampler.diagnostics.ar_rate(),
        sampler.diagnostics.ar_fallbacks
    );
    Ok(ChainOutput {
        draws,
        cluster_counts,
        diagnostics: sampler.diagnostics,
    })
}
