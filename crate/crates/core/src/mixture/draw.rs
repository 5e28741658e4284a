//! Frozen posterior draws and their JSON record layout.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClusterAtom;

/// One posterior draw G^(s): π₀, occupied weights and atoms, and the fresh
/// atoms representing the PY remainder with multiplicities summing to M.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub pi0: f64,
    pub weights: Vec<f64>,
    pub atoms: Vec<ClusterAtom>,
    pub fresh_atoms: Vec<ClusterAtom>,
    pub multiplicities: Vec<usize>,
    pub m: usize,
}

impl PosteriorDraw {
    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    /// All components with their mixture weights: occupied atoms with π_k,
    /// fresh atoms with π₀ m_h / M.
    pub fn components(&self) -> impl Iterator<Item = (f64, &ClusterAtom)> {
        let m = self.m.max(1) as f64;
        self.weights.iter().copied().zip(&self.atoms).chain(
            self.multiplicities
                .iter()
                .zip(&self.fresh_atoms)
                .map(move |(&mh, a)| (self.pi0 * mh as f64 / m, a)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.pi0 + self.weights.iter().sum::<f64>();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(alloc::format!(
                "draw weights sum to {total}"
            )));
        }
        if self.weights.len() != self.atoms.len()
            || self.multiplicities.len() != self.fresh_atoms.len()
        {
            return Err(Error::InvalidData("draw component counts disagree".into()));
        }
        if self.multiplicities.iter().sum::<usize>() != self.m {
            return Err(Error::InvalidData(
                "fresh multiplicities do not sum to M".into(),
            ));
        }
        if self.atoms.is_empty() && self.fresh_atoms.is_empty() {
            return Err(Error::InvalidData("draw has no components".into()));
        }
        let p = self
            .atoms
            .first()
            .or(self.fresh_atoms.first())
            .map(|a| a.dim())
            .unwrap_or(0);
        for a in self.atoms.iter().chain(&self.fresh_atoms) {
            if a.dim() != p {
                return Err(Error::InvalidData("atoms of mixed dimension".into()));
            }
            a.validate()?;
        }
        Ok(())
    }
}

/// Serialized atom: vectors as arrays and matrices as row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub mu_y: f64,
    pub sigma2_y: f64,
    pub mu_x: Vec<f64>,
    pub sigma_c: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub pi0: f64,
    pub weights: Vec<f64>,
    pub atoms: Vec<AtomRecord>,
    pub fresh_atoms: Vec<AtomRecord>,
    pub multiplicities: Vec<usize>,
    pub m: usize,
}

/// A retained chain: draws plus the covariate names they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsRecord {
    pub columns: Vec<String>,
    pub draws: Vec<DrawRecord>,
}

impl From<&ClusterAtom> for AtomRecord {
    fn from(a: &ClusterAtom) -> Self {
        let p = a.dim();
        Self {
            mu_y: a.mu_y,
            sigma2_y: a.sigma2_y,
            mu_x: a.mu_x.iter().copied().collect(),
            sigma_c: (0..p)
                .map(|i| (0..p).map(|j| a.sigma_c[(i, j)]).collect())
                .collect(),
            eta: a.eta.iter().copied().collect(),
        }
    }
}

impl TryFrom<&AtomRecord> for ClusterAtom {
    type Error = Error;

    fn try_from(r: &AtomRecord) -> Result<Self> {
        let p = r.mu_x.len();
        if r.eta.len() != p || r.sigma_c.len() != p || r.sigma_c.iter().any(|row| row.len() != p) {
            return Err(Error::InvalidData("atom record dimensions disagree".into()));
        }
        let atom = ClusterAtom {
            mu_y: r.mu_y,
            sigma2_y: r.sigma2_y,
            mu_x: DVector::from_column_slice(&r.mu_x),
            sigma_c: DMatrix::from_fn(p, p, |i, j| r.sigma_c[i][j]),
            eta: DVector::from_column_slice(&r.eta),
        };
        atom.validate()?;
        Ok(atom)
    }
}

impl From<&PosteriorDraw> for DrawRecord {
    fn from(d: &PosteriorDraw) -> Self {
        Self {
            pi0: d.pi0,
            weights: d.weights.clone(),
            atoms: d.atoms.iter().map(AtomRecord::from).collect(),
            fresh_atoms: d.fresh_atoms.iter().map(AtomRecord::from).collect(),
            multiplicities: d.multiplicities.clone(),
            m: d.m,
        }
    }
}

impl TryFrom<&DrawRecord> for PosteriorDraw {
    type Error = Error;

    fn try_from(r: &DrawRecord) -> Result<Self> {
        let draw = PosteriorDraw {
            pi0: r.pi0,
            weights: r.weights.clone(),
            atoms: r
                .atoms
                .iter()
                .map(ClusterAtom::try_from)
                .collect::<Result<_>>()?,
            fresh_atoms: r
                .fresh_atoms
                .iter()
                .map(ClusterAtom::try_from)
                .collect::<Result<_>>()?,
            multiplicities: r.multiplicities.clone(),
            m: r.m,
        };
        draw.validate()?;
        Ok(draw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn atom(mu: f64) -> ClusterAtom {
        ClusterAtom {
            mu_y: mu,
            sigma2_y: 1.0,
            mu_x: DVector::from_vec(vec![0.0, 1.0]),
            sigma_c: DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 2.0]),
            eta: DVector::from_vec(vec![0.5, -0.5]),
        }
    }

    #[test]
    fn record_round_trip_is_row_major() {
        let d = PosteriorDraw {
            pi0: 0.2,
            weights: vec![0.5, 0.3],
            atoms: vec![atom(1.0), atom(2.0)],
            fresh_atoms: vec![atom(3.0)],
            multiplicities: vec![10],
            m: 10,
        };
        d.validate().unwrap();
        let r = DrawRecord::from(&d);
        assert_eq!(r.atoms[0].sigma_c, vec![vec![1.0, 0.25], vec![0.25, 2.0]]);
        assert_eq!(PosteriorDraw::try_from(&r).unwrap(), d);
        let w: f64 = d.components().map(|(w, _)| w).sum();
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_records_rejected() {
        let mut r = DrawRecord::from(&PosteriorDraw {
            pi0: 0.0,
            weights: vec![1.0],
            atoms: vec![atom(0.0)],
            fresh_atoms: vec![],
            multiplicities: vec![],
            m: 0,
        });
        r.atoms[0].sigma_c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(PosteriorDraw::try_from(&r).is_err());
        r.atoms[0].sigma_c = vec![vec![1.0]];
        assert!(PosteriorDraw::try_from(&r).is_err());
    }
}
