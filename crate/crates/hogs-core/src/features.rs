//! Curator-side feature reconstruction.
//!
//! Each node's feature vector is rebuilt as the posterior-weighted average of
//! its potential neighbors' noisy features (pairs with posterior >= 0.5),
//! optionally iterated. The node itself always participates at weight 1, so
//! the average is defined even for nodes with no potential neighbors and a
//! node's own signal is never discarded. Iterated passes reuse the original
//! posterior weights; weights are never recomputed from reconstructed
//! features.

use ndarray::Array2;

use crate::bits::BitMatrix;
use crate::error::{HogsError, Result};
use crate::topology::{LinkPosteriorSet, SyntheticTopology};

/// Weight of a node toward its own aggregate.
pub const SELF_WEIGHT: f64 = 1.0;

/// Per-node lists of `(neighbor, posterior)` with posterior >= 0.5.
/// The implicit self entry at [`SELF_WEIGHT`] is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialNeighborIndex {
    neighbors: Vec<Vec<(u32, f64)>>,
}

impl PotentialNeighborIndex {
    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(u32, f64)] {
        &self.neighbors[i]
    }
}

/// Index every pair with posterior >= 0.5, symmetrically.
pub fn build_neighbor_index(posteriors: &LinkPosteriorSet) -> PotentialNeighborIndex {
    let mut neighbors = vec![Vec::new(); posteriors.n()];
    for e in posteriors.entries() {
        if e.posterior >= 0.5 {
            neighbors[e.i as usize].push((e.j, e.posterior));
            neighbors[e.j as usize].push((e.i, e.posterior));
        }
    }
    for list in &mut neighbors {
        list.sort_unstable_by_key(|&(j, _)| j);
    }
    PotentialNeighborIndex { neighbors }
}

/// One pass of posterior-weighted averaging:
/// `row i = (f_i + sum_j w_ij f_j) / (1 + sum_j w_ij)`.
pub fn weighted_aggregate(
    index: &PotentialNeighborIndex,
    features: &Array2<f64>,
) -> Result<Array2<f64>> {
    if features.nrows() != index.node_count() {
        return Err(HogsError::Dimension {
            what: "feature matrix rows",
            expected: index.node_count(),
            got: features.nrows(),
        });
    }
    let d = features.ncols();
    let mut out = Array2::zeros((features.nrows(), d));
    for i in 0..features.nrows() {
        let mut acc = features.row(i).to_owned() * SELF_WEIGHT;
        let mut total = SELF_WEIGHT;
        for &(j, w) in index.neighbors(i) {
            acc.scaled_add(w, &features.row(j as usize));
            total += w;
        }
        acc /= total;
        out.row_mut(i).assign(&acc);
    }
    Ok(out)
}

/// Reconstructed feature matrix plus the number of aggregation passes.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedFeatures {
    pub matrix: Array2<f64>,
    pub iterations_applied: usize,
}

/// Apply `l` passes of [`weighted_aggregate`] to the noisy feature bits.
/// `l = 0` passes the bits through unchanged, cast to reals.
pub fn reconstruct_features(
    posteriors: &LinkPosteriorSet,
    noisy_features: &BitMatrix,
    l: usize,
) -> Result<ReconstructedFeatures> {
    if noisy_features.rows() != posteriors.n() {
        return Err(HogsError::Dimension {
            what: "noisy feature rows",
            expected: posteriors.n(),
            got: noisy_features.rows(),
        });
    }
    let mut matrix = bits_to_f64(noisy_features);
    if l > 0 {
        let index = build_neighbor_index(posteriors);
        for _ in 0..l {
            matrix = weighted_aggregate(&index, &matrix)?;
        }
    }
    Ok(ReconstructedFeatures {
        matrix,
        iterations_applied: l,
    })
}

/// K-hop unweighted mean aggregation over the synthetic topology: `k`
/// applications of one-hop mean aggregation including self.
pub fn kprop_aggregate(
    topology: &SyntheticTopology,
    features: &Array2<f64>,
    k: usize,
) -> Result<Array2<f64>> {
    if k == 0 {
        return Err(HogsError::Config("kprop requires k >= 1".into()));
    }
    let n = features.nrows();
    let mut neighbors = vec![Vec::new(); n];
    for &(i, j) in topology.edges() {
        if i as usize >= n || j as usize >= n {
            return Err(HogsError::Validation(format!(
                "edge ({i}, {j}) references a node >= {n}"
            )));
        }
        neighbors[i as usize].push(j as usize);
        neighbors[j as usize].push(i as usize);
    }
    let mut current = features.clone();
    for _ in 0..k {
        let mut next = Array2::zeros(current.raw_dim());
        for i in 0..n {
            let mut acc = current.row(i).to_owned();
            for &j in &neighbors[i] {
                acc += &current.row(j);
            }
            acc /= (neighbors[i].len() + 1) as f64;
            next.row_mut(i).assign(&acc);
        }
        current = next;
    }
    Ok(current)
}

pub fn bits_to_f64(bits: &BitMatrix) -> Array2<f64> {
    Array2::from_shape_fn((bits.rows(), bits.cols()), |(r, c)| {
        if bits.get(r, c) {
            1.0
        } else {
            0.0
        }
    })
}
