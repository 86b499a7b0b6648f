//! Gaussian blobs in feature space, for benchmarks and scaling checks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::pflicm::NeighborGraph;
use crate::types::{FeatureMatrix, LabeledDataset};

/// `n` samples in `n_dims` dimensions, split round-robin over `n_classes`
/// unit-variance Gaussian blobs whose means are drawn from `[-spread, spread]`.
/// Blob means depend only on `seed`, not on `n`.
pub fn feature_blobs(n: usize, n_dims: usize, n_classes: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || n_dims == 0 || n_classes == 0 {
        return Err(Error::InvalidParam("blob sizes must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = Array2::from_shape_fn((n_classes, n_dims), |_| rng.random_range(-spread..=spread));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let data = Array2::from_shape_fn((n, n_dims), |(i, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        means[[labels[i], j]] + z
    });
    LabeledDataset::new(
        FeatureMatrix::new(data)?,
        labels,
        (0..n_classes).map(|c| format!("class{c}")).collect(),
    )
}

/// Samples placed row by row on a near-square lattice with unit spacing,
/// each linked to its 4-neighbors.
pub fn lattice_graph(n: usize) -> NeighborGraph {
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        if (i + 1) % cols != 0 && i + 1 < n {
            edges.push((i, i + 1, 1.0));
        }
        if i + cols < n {
            edges.push((i, i + cols, 1.0));
        }
    }
    NeighborGraph::from_edges(n, &edges).expect("lattice edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_degrees() {
        let g = lattice_graph(9);
        assert_eq!(g.neighbors(4).len(), 4);
        assert_eq!(g.neighbors(0).len(), 2);
        assert_eq!(g.n_edges(), 12);
    }

    #[test]
    fn blob_means_do_not_depend_on_size() {
        let a = feature_blobs(40, 3, 2, 5.0, 7).unwrap();
        let b = feature_blobs(80, 3, 2, 5.0, 7).unwrap();
        assert_eq!(a.features().row(0), b.features().row(0));
        assert_eq!(a.class_counts(), vec![20, 20]);
    }
}
