//! Shared inputs for the benchmarks.

use posseg::synth::{default_specs, feature_blobs, generate_image, lattice_graph, Layout};
use posseg::{LabeledDataset, NeighborGraph};

pub const DIMS: usize = 34;
pub const CLASSES: usize = 4;

/// Training blobs and a same-distribution query set.
pub fn blobs(n_train: usize, n_test: usize) -> (LabeledDataset, LabeledDataset) {
    let train = feature_blobs(n_train, DIMS, CLASSES, 3.0, 1).expect("valid blob sizes");
    // Same seed: same means, and the first n_train draws repeat the training set.
    let test = feature_blobs(n_train + n_test, DIMS, CLASSES, 3.0, 1).expect("valid blob sizes");
    let idx: Vec<usize> = (n_train..n_train + n_test).collect();
    let test = LabeledDataset::new(
        test.features().select_rows(&idx).expect("rows in range"),
        idx.iter().map(|&i| test.labels()[i]).collect(),
        test.class_names().to_vec(),
    )
    .expect("consistent test set");
    (train, test)
}

pub fn graph(n: usize) -> NeighborGraph {
    lattice_graph(n)
}

/// Four-texture quadrant image.
pub fn texture_image(side: usize) -> posseg::io::Image {
    let layout = Layout::quadrants(&default_specs(), (side, side)).expect("four default specs");
    generate_image(&layout, (side, side), 3).expect("valid layout").0
}
