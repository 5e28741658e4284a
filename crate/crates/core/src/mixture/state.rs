//! Sampler state and its initialization.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BaseMeasure, ClusterAtom, Dataset, PyParams};
use crate::rng::RngStream;

/// Which transition drives the (μ_y, σ_y²) update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MhPhase {
    RandomWalk,
    AcceptanceRejection,
}

/// Current partition, occupied atoms and latent responses.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub assignments: Vec<usize>,
    pub atoms: Vec<ClusterAtom>,
    pub counts: Vec<usize>,
    pub latent: Vec<f64>,
    pub iteration: usize,
    pub phase: MhPhase,
    pub rw_step: f64,
}

impl SamplerState {
    /// Number of occupied atoms K_N.
    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    /// Indices of observations in each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &k) in self.assignments.iter().enumerate() {
            out[k].push(i);
        }
        out
    }

    /// Check the structural invariants against the data.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let n = data.n();
        if self.assignments.len() != n || self.latent.len() != n {
            return Err(Error::Numerical("state length does not match data".into()));
        }
        if self.counts.len() != self.atoms.len() || self.atoms.is_empty() {
            return Err(Error::Numerical("atom table is inconsistent".into()));
        }
        let mut tally = vec![0usize; self.k()];
        for &k in &self.assignments {
            if k >= self.k() {
                return Err(Error::Numerical(alloc::format!(
                    "assignment {k} out of range"
                )));
            }
            tally[k] += 1;
        }
        if tally != self.counts || tally.contains(&0) {
            return Err(Error::Numerical(
                "occupancy counts disagree with assignments".into(),
            ));
        }
        for (i, (&y, &z)) in data.y().iter().zip(&self.latent).enumerate() {
            if !(z > y as f64 - 1.0 && z <= y as f64) {
                return Err(Error::Numerical(alloc::format!(
                    "latent {z} of observation {i} outside its cell"
                )));
            }
        }
        for atom in &self.atoms {
            atom.validate()?;
        }
        Ok(())
    }

    /// Drop atoms with no members and renumber assignments in first-seen
    /// order of the surviving atoms.
    pub(crate) fn relabel(&mut self) {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut atoms = Vec::new();
        let mut counts = Vec::new();
        for a in self.assignments.iter_mut() {
            if map[*a] == usize::MAX {
                map[*a] = atoms.len();
                atoms.push(self.atoms[*a].clone());
                counts.push(0);
            }
            *a = map[*a];
            counts[*a] += 1;
        }
        self.atoms = atoms;
        self.counts = counts;
    }
}

const INIT_CLUSTERS: usize = 10;
const KMEANS_ITERS: usize = 50;

/// Lloyd's k-means with k-means++ seeding. Returns labels in 0..k.
pub fn kmeans(points: &[DVector<f64>], k: usize, rng: &mut RngStream) -> Vec<usize> {
    let n = points.len();
    let k = k.clamp(1, n);
    let mut centers: Vec<DVector<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| (p - &centers[0]).norm_squared())
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(points[pick].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
    }
    let mut labels = vec![0usize; n];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..centers.len())
                .min_by(|&a, &b| {
                    (p - &centers[a])
                        .norm_squared()
                        .total_cmp(&(p - &centers[b]).norm_squared())
                })
                .unwrap();
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let mut sum = DVector::zeros(center.len());
            let mut cnt = 0usize;
            for (p, _) in points.iter().zip(&labels).filter(|(_, &l)| l == c) {
                sum += p;
                cnt += 1;
            }
            if cnt > 0 {
                *center = sum / cnt as f64;
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Initial state: latents uniform in their count cells, k-means on the
/// standardized (y, x) with at most ten clusters, and atoms set from the
/// cluster moments shrunk toward the base measure.
pub fn init_state(
    data: &Dataset,
    base: &BaseMeasure,
    _py: &PyParams,
    rng: &mut RngStream,
) -> Result<SamplerState> {
    base.validate()?;
    if base.dim() != data.p() {
        return Err(Error::InvalidData(alloc::format!(
            "base measure has dimension {} but data has {} covariates",
            base.dim(),
            data.p()
        )));
    }
    let n = data.n();
    let p = data.p();
    let latent: Vec<f64> = data
        .y()
        .iter()
        .map(|&y| y as f64 - rng.random::<f64>())
        .collect();
    // random() is in [0, 1); y - u lies in (y - 1, y]

    let mut cols: Vec<Vec<f64>> = vec![data.y().iter().map(|&y| y as f64).collect()];
    cols.extend((0..p).map(|j| data.column(j)));
    let scaled: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            c.iter().map(|v| (v - m) / sd).collect()
        })
        .collect();
    let points: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_iterator(p + 1, scaled.iter().map(|c| c[i])))
        .collect();
    let labels = kmeans(&points, INIT_CLUSTERS.min(n), rng);

    let k = labels.iter().max().unwrap() + 1;
    let mut state = SamplerState {
        assignments: labels,
        atoms: vec![base_mode(base); k],
        counts: vec![0; k],
        latent,
        iteration: 0,
        phase: MhPhase::RandomWalk,
        rw_step: 0.1,
    };
    state.relabel();
    for (c, idx) in state.members().iter().enumerate() {
        state.atoms[c] = moment_atom(data, &state.latent, idx, base);
    }
    state.check(data)?;
    Ok(state)
}

fn base_mode(base: &BaseMeasure) -> ClusterAtom {
    let p = base.dim();
    ClusterAtom {
        mu_y: base.mu_y0,
        sigma2_y: base.t0 / (base.k0 + 1.0),
        mu_x: base.mu_x0.clone(),
        sigma_c: &base.s0 / (base.n0 + p as f64 + 1.0),
        eta: DVector::zeros(p),
    }
}

fn moment_atom(data: &Dataset, latent: &[f64], idx: &[usize], base: &BaseMeasure) -> ClusterAtom {
    let p = data.p();
    let n = idx.len() as f64;
    let mu_y = idx.iter().map(|&i| latent[i]).sum::<f64>() / n;
    let ss_y: f64 = idx.iter().map(|&i| (latent[i] - mu_y).powi(2)).sum();
    let mut mu_x = DVector::zeros(p);
    for &i in idx {
        mu_x += data.row(i);
    }
    mu_x /= n;
    let mut scatter = DMatrix::zeros(p, p);
    for &i in idx {
        let r = data.row(i) - &mu_x;
        scatter += &r * r.transpose();
    }
    ClusterAtom {
        mu_y,
        sigma2_y: (base.t0 + 0.5 * ss_y) / (base.k0 + 1.0 + 0.5 * n),
        mu_x,
        sigma_c: (&base.s0 + scatter) / (base.n0 + n + p as f64 + 1.0),
        eta: DVector::zeros(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_hyperparameters;

    fn data(y: Vec<u64>, x: Vec<f64>) -> Dataset {
        let n = y.len();
        Dataset::with_default_names(y, DMatrix::from_vec(n, 1, x)).unwrap()
    }

    #[test]
    fn latents_in_cells() {
        let d = data(vec![0, 5, 2, 0, 7, 1], vec![0.1, 2.0, -1.0, 0.3, 1.5, 0.0]);
        let base = default_hyperparameters(&d).unwrap();
        let py = PyParams::new(0.3, 1.0).unwrap();
        let s = init_state(&d, &base, &py, &mut RngStream::new(1, 0)).unwrap();
        assert!(s.latent[0] > -1.0 && s.latent[0] <= 0.0);
        assert!(s.latent[1] > 4.0 && s.latent[1] <= 5.0);
        assert_eq!(s.counts.iter().sum::<usize>(), 6);
        assert_eq!(s.phase, MhPhase::RandomWalk);
    }

    #[test]
    fn two_observations() {
        let d = data(vec![1, 3], vec![0.0, 1.0]);
        let base = default_hyperparameters(&d).unwrap();
        let py = PyParams::new(0.0, 1.0).unwrap();
        let s = init_state(&d, &base, &py, &mut RngStream::new(2, 0)).unwrap();
        assert!(s.k() >= 1);
        assert_eq!(s.counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let off = if i < 10 { 0.0 } else { 10.0 };
            pts.push(DVector::from_vec(vec![off + 0.01 * i as f64, off]));
        }
        let labels = kmeans(&pts, 2, &mut RngStream::new(5, 0));
        assert!(labels[..10].iter().all(|&l| l == labels[0]));
        assert!(labels[10..].iter().all(|&l| l == labels[10]));
        assert_ne!(labels[0], labels[10]);
    }

    #[test]
    fn relabel_drops_empty() {
        let d = data(vec![1, 3, 2], vec![0.0, 1.0, 2.0]);
        let base = default_hyperparameters(&d).unwrap();
        let atom = base_mode(&base);
        let mut s = SamplerState {
            assignments: vec![2, 0, 2],
            atoms: vec![atom.clone(), atom.clone(), atom],
            counts: vec![1, 0, 2],
            latent: vec![0.5, 2.5, 1.5],
            iteration: 0,
            phase: MhPhase::RandomWalk,
            rw_step: 0.1,
        };
        s.relabel();
        assert_eq!(s.assignments, vec![0, 1, 0]);
        assert_eq!(s.counts, vec![2, 1]);
        s.check(&d).unwrap();
    }
}
