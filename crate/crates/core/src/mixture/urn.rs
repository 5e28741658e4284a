//! Dirichlet weights of the occupied atoms and the fresh-atom urn.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::model::{BaseMeasure, ClusterAtom, PyParams};
use crate::rng::RngStream;
use crate::sampling::sample_dirichlet;

use super::state::SamplerState;

/// Atoms drawn from the PY remainder with their urn multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct FreshAtoms {
    pub atoms: Vec<ClusterAtom>,
    pub multiplicities: Vec<usize>,
}

impl FreshAtoms {
    /// Total number of urn draws M.
    pub fn m(&self) -> usize {
        self.multiplicities.iter().sum()
    }
}

/// (π₀, π_1..π_K) ~ Dir(ϑ + φK, n_1 − φ, ..., n_K − φ).
pub fn dirichlet_weights(
    counts: &[usize],
    py: &PyParams,
    rng: &mut RngStream,
) -> Result<(f64, Vec<f64>)> {
    let (phi, theta) = (py.discount(), py.strength());
    let mut alphas = Vec::with_capacity(counts.len() + 1);
    alphas.push(theta + phi * counts.len() as f64);
    alphas.extend(counts.iter().map(|&n| n as f64 - phi));
    let mut w = sample_dirichlet(&alphas, rng)?;
    let pi0 = w.remove(0);
    Ok((pi0, w))
}

pub fn sample_mixture_weights(
    state: &SamplerState,
    py: &PyParams,
    rng: &mut RngStream,
) -> Result<(f64, Vec<f64>)> {
    dirichlet_weights(&state.counts, py, rng)
}

/// Multiplicities of M sequential draws from a PY(φ, ϑ + φK) urn.
pub fn fresh_urn_multiplicities(
    k: usize,
    py: &PyParams,
    m: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    let (phi, theta) = (py.discount(), py.strength());
    let base = theta + phi * k as f64;
    let mut mult: Vec<usize> = Vec::new();
    for h in 0..m {
        let denom = base + h as f64;
        let p_new = (base + phi * mult.len() as f64) / denom;
        let u = rng.uniform_open();
        if mult.is_empty() || u < p_new {
            mult.push(1);
            continue;
        }
        // reuse value j with probability (m_j − φ)/denom
        let mut acc = p_new;
        let mut pick = mult.len() - 1;
        for (j, &mj) in mult.iter().enumerate() {
            acc += (mj as f64 - phi) / denom;
            if u < acc {
                pick = j;
                break;
            }
        }
        mult[pick] += 1;
    }
    mult
}

/// Fresh atoms from G0 following the urn, given K_N occupied atoms.
pub fn sample_fresh_atoms(
    state: &SamplerState,
    py: &PyParams,
    base: &BaseMeasure,
    m: usize,
    rng: &mut RngStream,
) -> Result<FreshAtoms> {
    fresh_atoms_for(state.k(), py, base, m, rng)
}

pub(crate) fn fresh_atoms_for(
    k: usize,
    py: &PyParams,
    base: &BaseMeasure,
    m: usize,
    rng: &mut RngStream,
) -> Result<FreshAtoms> {
    let multiplicities = if m == 0 {
        vec![]
    } else {
        fresh_urn_multiplicities(k, py, m, rng)
    };
    let atoms = multiplicities
        .iter()
        .map(|_| base.sample(rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(FreshAtoms {
        atoms,
        multiplicities,
    })
}
