use super::*;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::squared_distance;

fn names(l: usize) -> Vec<String> {
    (0..l).map(|i| format!("class{i}")).collect()
}

fn random_dataset(seed: u64, n: usize, d: usize, l: usize) -> LabeledDataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let f = FeatureMatrix::new(Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0))).unwrap();
    let labels = (0..n).map(|_| r.random_range(0..l)).collect();
    LabeledDataset::new(f, labels, names(l)).unwrap()
}

fn brute_neighbors(f: &FeatureMatrix, q: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..f.n_samples())
        .filter(|&i| Some(i) != skip)
        .map(|i| (i, squared_distance(f.row(i), q).sqrt()))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[test]
fn knn_matches_exhaustive_scan() {
    let ds = random_dataset(1, 200, 5, 2);
    let tree = KdTree::build(ds.features().clone());
    let mut r = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let q: Vec<f64> = (0..5).map(|_| r.random_range(-1.2..1.2)).collect();
        assert_eq!(knn_search(&tree, &q, 6).unwrap(), brute_neighbors(ds.features(), &q, 6, None));
    }
}

#[test]
fn pure_neighborhoods_give_crisp_labels() {
    let f = FeatureMatrix::new(array![[0.0], [0.1], [0.2], [10.0], [10.1], [10.2]]).unwrap();
    let ds = LabeledDataset::new(f, vec![0, 0, 0, 1, 1, 1], names(2)).unwrap();
    let fuzzy = init_fuzzy_labels(&ds, 2).unwrap();
    for i in 0..6 {
        let own = ds.labels()[i];
        assert_eq!(fuzzy[[i, own]], 1.0);
        assert_eq!(fuzzy[[i, 1 - own]], 0.0);
    }
}

#[test]
fn split_neighborhood_hand_value() {
    // Sample 0 (class 0) has six neighbors: three of class 0, three of class 1.
    let f = FeatureMatrix::new(array![[0.0], [1.0], [-1.0], [2.0], [-2.0], [3.0], [-3.0]]).unwrap();
    let ds = LabeledDataset::new(f, vec![0, 0, 0, 0, 1, 1, 1], names(2)).unwrap();
    let fuzzy = init_fuzzy_labels(&ds, 6).unwrap();
    assert!((fuzzy[[0, 0]] - 0.755).abs() < 1e-15);
    assert!((fuzzy[[0, 1]] - 0.245).abs() < 1e-15);
}

#[test]
fn fuzzy_rows_reconstruct_vote_counts() {
    for seed in 0..10 {
        let k = 1 + seed as usize % 7;
        let ds = random_dataset(seed, 40, 3, 3);
        let fuzzy = init_fuzzy_labels(&ds, k).unwrap();
        for i in 0..ds.len() {
            let own = ds.labels()[i];
            assert!(fuzzy[[i, own]] >= 0.51);
            assert!((fuzzy.row(i).sum() - 1.0).abs() < 1e-12);
            // Brute-force vote counts over the k nearest others.
            let mut counts = [0usize; 3];
            for (j, _) in brute_neighbors(ds.features(), ds.features().row(i), k, Some(i)) {
                counts[ds.labels()[j]] += 1;
            }
            for c in 0..3 {
                let base = if c == own { 0.51 } else { 0.0 };
                let n_c = ((fuzzy[[i, c]] - base) / (0.49 / k as f64)).round() as usize;
                assert_eq!(n_c, counts[c]);
            }
        }
    }
}

#[test]
fn fuzzy_labels_need_two_samples() {
    let ds = LabeledDataset::new(FeatureMatrix::new(array![[0.0]]).unwrap(), vec![0], names(1)).unwrap();
    assert!(init_fuzzy_labels(&ds, 1).is_err());
    let ds = random_dataset(3, 5, 2, 2);
    assert!(init_fuzzy_labels(&ds, 5).is_err());
}

#[test]
fn weight_examples() {
    let p = PknnParams { k: 1, m: 2.0, eta: 0.0 };
    assert_eq!(possibilistic_weight(1.0, &p), 0.5);
    let p = PknnParams { eta: 0.3, ..p };
    assert_eq!(possibilistic_weight(0.0, &p), 1.0);
    assert_eq!(possibilistic_weight(0.3, &p), 1.0);
    let p = PknnParams::default();
    let grid: Vec<f64> = (1..200).map(|i| p.eta + i as f64 * 0.05).collect();
    for w in grid.windows(2) {
        assert!(possibilistic_weight(w[1], &p) < possibilistic_weight(w[0], &p));
    }
}

#[test]
fn single_neighbor_on_pure_point() {
    let f = FeatureMatrix::new(array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]]).unwrap();
    let ds = LabeledDataset::new(f, vec![0, 0, 1, 1], names(2)).unwrap();
    let model = fit(&ds, &PknnParams { k: 1, ..Default::default() }).unwrap();
    assert_eq!(model.classify(&[5.0, 5.0]).unwrap(), vec![0.0, 1.0]);
}

#[test]
fn far_query_is_bounded_by_weight_of_nearest() {
    let ds = random_dataset(4, 30, 3, 3);
    let model = fit(&ds, &PknnParams::default()).unwrap();
    let q = [40.0, -35.0, 20.0];
    let conf = model.classify(&q).unwrap();
    let nearest = brute_neighbors(ds.features(), &q, 1, None)[0].1;
    let max_mu = model.train_fuzzy().iter().copied().fold(0.0, f64::max);
    let eps = max_mu * possibilistic_weight(nearest, model.params());
    assert!(eps < 1e-3);
    assert!(conf.iter().all(|&c| c <= eps));
}

fn brute_classify(ds: &LabeledDataset, fuzzy: &Array2<f64>, p: &PknnParams, q: &[f64]) -> Vec<f64> {
    let mut conf = vec![0.0; ds.n_classes()];
    for (j, d) in brute_neighbors(ds.features(), q, p.k, None) {
        let w = 1.0 / (1.0 + (d - p.eta).max(0.0).powf(2.0 / (p.m - 1.0)));
        for c in 0..conf.len() {
            conf[c] += fuzzy[[j, c]] * w;
        }
    }
    conf.iter().map(|v| v / p.k as f64).collect()
}

#[test]
fn classify_matches_brute_force() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..10 {
        let ds = random_dataset(100 + seed, 50, 4, 3);
        let p = PknnParams { k: 1 + seed as usize % 8, m: 1.5 + seed as f64 * 0.2, eta: 0.05 };
        let model = fit(&ds, &p).unwrap();
        for _ in 0..10 {
            let q: Vec<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
            let got = model.classify(&q).unwrap();
            let want = brute_classify(&ds, model.train_fuzzy(), &p, &q);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12);
            }
            // Weighted-average bound.
            for (c, v) in got.iter().enumerate() {
                assert!((0.0..=1.0).contains(v));
                let max_mu = model.train_fuzzy().column(c).iter().copied().fold(0.0, f64::max);
                assert!(*v <= max_mu + 1e-15);
            }
        }
    }
}

#[test]
fn batch_matches_single() {
    let ds = random_dataset(5, 60, 3, 2);
    let model = fit(&ds, &PknnParams::default()).unwrap();
    let batch = model.classify_batch(ds.features()).unwrap();
    for i in 0..ds.len() {
        assert_eq!(batch.column(i).to_vec(), model.classify(ds.features().row(i)).unwrap());
    }
}

#[test]
fn separated_data_has_pure_soft_labels_and_own_class_wins() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in [[0.0, 0.0], [8.0, 0.0], [0.0, 8.0]].iter().enumerate() {
        for _ in 0..30 {
            rows.push(vec![center[0] + r.random_range(-0.5..0.5), center[1] + r.random_range(-0.5..0.5)]);
            labels.push(c);
        }
    }
    let ds = LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), labels, names(3)).unwrap();
    let model = fit(&ds, &PknnParams::default()).unwrap();
    for i in 0..ds.len() {
        assert_eq!(model.train_fuzzy()[[i, ds.labels()[i]]], 1.0);
        let conf = model.classify(ds.features().row(i)).unwrap();
        assert_eq!(crate::types::argmax(ndarray::ArrayView1::from(&conf)), ds.labels()[i]);
    }
}

#[test]
fn confidence_is_lipschitz_away_from_neighbor_changes() {
    let ds = random_dataset(7, 50, 2, 2);
    let model = fit(&ds, &PknnParams::default()).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let delta = 1e-6;
    for _ in 0..50 {
        let q = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let q2 = [q[0] + delta, q[1]];
        let n1: Vec<usize> = model.index().knn(&q, 6).unwrap().iter().map(|p| p.0).collect();
        let n2: Vec<usize> = model.index().knn(&q2, 6).unwrap().iter().map(|p| p.0).collect();
        if n1 != n2 {
            continue;
        }
        let a = model.classify(&q).unwrap();
        let b = model.classify(&q2).unwrap();
        // |dw/dd| <= 1 for m = 2, so each confidence moves by at most delta.
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= delta * (1.0 + 1e-6));
        }
    }
}

#[test]
fn outlier_confidence_decays_along_a_ray() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| vec![r.random_range(-0.1..0.1), r.random_range(-0.1..0.1)])
        .collect();
    let ds = LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), vec![0; 20], names(1)).unwrap();
    let model = fit(&ds, &PknnParams::default()).unwrap();
    let mut prev = f64::INFINITY;
    let mut prev_set: Option<Vec<usize>> = None;
    for step in 1..200 {
        let q = [0.5 + step as f64 * 0.05, 0.3 + step as f64 * 0.02];
        let set: Vec<usize> = model.index().knn(&q, 6).unwrap().iter().map(|p| p.0).collect();
        let conf = model.classify(&q).unwrap()[0];
        if prev_set.as_ref() == Some(&set) {
            assert!(conf <= prev);
        }
        prev = conf;
        prev_set = Some(set);
    }
}

#[test]
fn fit_needs_k_plus_one_samples() {
    let ds = random_dataset(11, 6, 2, 2);
    assert!(matches!(fit(&ds, &PknnParams::default()), Err(Error::TooFewSamples { .. })));
}

#[test]
fn from_parts_rejects_inconsistent_soft_labels() {
    let ds = random_dataset(12, 20, 2, 2);
    let model = fit(&ds, &PknnParams::default()).unwrap();
    let rebuilt = PknnModel::from_parts(
        model.train_features().clone(),
        model.train_labels().to_vec(),
        model.train_fuzzy().clone(),
        model.class_names().to_vec(),
        *model.params(),
        None,
    )
    .unwrap();
    assert_eq!(rebuilt, model);
    let mut bad = model.train_fuzzy().clone();
    bad[[0, 0]] += 0.01;
    assert!(PknnModel::from_parts(
        model.train_features().clone(),
        model.train_labels().to_vec(),
        bad,
        model.class_names().to_vec(),
        *model.params(),
        None,
    )
    .is_err());
}
