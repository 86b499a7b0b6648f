use super::*;
use ndarray::array;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pflicm::{ClusterLabels, NeighborGraph};
use crate::synth::feature_blobs;
use crate::types::{FeatureMatrix, PflicmParams, PknnParams};

fn names(l: usize) -> Vec<String> {
    (0..l).map(|i| format!("c{i}")).collect()
}

fn labeled_model(classes: Vec<usize>, l: usize) -> PflicmModel {
    let c = classes.len();
    PflicmModel {
        centers: Array2::zeros((c, 1)),
        gammas: vec![1.0; c],
        params: PflicmParams { n_clusters: c, ..Default::default() },
        cluster_labels: Some(ClusterLabels { classes, class_names: names(l) }),
        normalizer: None,
    }
}

#[test]
fn pflicm_crisp_follows_cluster_labels() {
    let model = labeled_model(vec![2, 0, 1], 3);
    let maps = AssignmentMaps::new(
        array![[1.0, 0.2, 0.5], [0.0, 0.3, 0.5], [0.0, 0.5, 0.0]],
        array![[1.0, 1.0, 0.4], [1.0, 1.0, 0.4], [1.0, 1.0, 1.0]],
        names(3),
    )
    .unwrap();
    // Column 2 ties between clusters 0 and 1; the lower cluster wins.
    assert_eq!(crisp_labels_pflicm(&maps, &model).unwrap(), vec![2, 1, 2]);
    let mut unlabeled = model.clone();
    unlabeled.cluster_labels = None;
    assert!(crisp_labels_pflicm(&maps, &unlabeled).is_err());
}

#[test]
fn pflicm_crisp_matches_brute_force_argmax() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (c, n) = (r.random_range(1..5), r.random_range(1..30));
        let mut u = Array2::from_shape_fn((c, n), |_| r.random_range(0.0..1.0));
        for mut col in u.columns_mut() {
            let s = col.sum();
            col /= s;
        }
        let t = Array2::from_shape_fn((c, n), |_| r.random_range(0.0..1.0));
        let classes: Vec<usize> = (0..c).map(|_| r.random_range(0..3)).collect();
        let model = labeled_model(classes.clone(), 3);
        let maps = AssignmentMaps::new(u.clone(), t.clone(), names(c)).unwrap();
        let got = crisp_labels_pflicm(&maps, &model).unwrap();
        for i in 0..n {
            let mut best = 0;
            for k in 1..c {
                if u[[k, i]] * t[[k, i]] > u[[best, i]] * t[[best, i]] {
                    best = k;
                }
            }
            assert_eq!(got[i], classes[best]);
        }
    }
}

#[test]
fn pknn_crisp_examples_and_monotone_invariance() {
    let conf = array![[0.9, 0.3], [0.1, 0.3], [0.0, 0.3], [0.0, 0.3]];
    assert_eq!(crisp_labels_pknn(&conf), vec![0, 0]);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let m = Array2::from_shape_fn((4, 50), |_| r.random_range(0.0..1.0));
    let labels = crisp_labels_pknn(&m);
    for (i, col) in m.columns().into_iter().enumerate() {
        let best = (0..4).fold(0, |b, k| if col[k] > col[b] { k } else { b });
        assert_eq!(labels[i], best);
    }
    assert_eq!(crisp_labels_pknn(&m.mapv(|v| (3.0 * v).exp() + 1.0)), labels);
}

#[test]
fn confusion_counts() {
    let cm = confusion(&[0, 1, 2], &[0, 1, 2], &names(3)).unwrap();
    assert_eq!(cm.counts(), &Array2::from_diag(&ndarray::arr1(&[1u64, 1, 1])));
    assert_eq!(cm.accuracy(), 1.0);
    let cm = confusion(&[1], &[2], &names(3)).unwrap();
    assert_eq!(cm.counts()[[1, 2]], 1);
    assert_eq!(cm.total(), 1);
    assert_eq!(cm.recall(0), None);
    assert_eq!(cm.recall(1), Some(0.0));
    assert!(confusion(&[0, 1], &[0], &names(2)).is_err());
    assert!(confusion(&[0], &[2], &names(2)).is_err());
}

#[test]
fn confusion_matches_tally_and_rates_are_row_stochastic() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let t: Vec<usize> = (0..200).map(|_| r.random_range(0..4)).collect();
    let p: Vec<usize> = (0..200).map(|_| r.random_range(0..4)).collect();
    let cm = confusion(&t, &p, &names(4)).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let n = t.iter().zip(&p).filter(|&(&a, &b)| a == i && b == j).count() as u64;
            assert_eq!(cm.counts()[[i, j]], n);
        }
    }
    assert_eq!(cm.total(), 200);
    for row in cm.rates().rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
    let csv = String::from_utf8(cm.to_csv().unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("true\\predicted,c0,c1,c2,c3,rate_c0"));
    let img = cm.heatmap(8);
    assert_eq!(img.dimensions(), (32, 32));
}

#[test]
fn fold_plans() {
    let plan = FoldPlan::even(98, 3).unwrap();
    assert_eq!(plan.sizes(), vec![32, 33, 33]);
    let mut all: Vec<usize> = (0..3).flat_map(|f| plan.test_ids(f).to_vec()).collect();
    all.sort_unstable();
    assert_eq!(all, (0..98).collect::<Vec<_>>());
    assert_eq!(plan.train_ids(0).len(), 66);
    assert_eq!(plan.fold_of(40), Some(1));
    assert_eq!(FoldPlan::even(3, 3).unwrap().sizes(), vec![1, 1, 1]);
    assert_eq!(FoldPlan::even(5, 1).unwrap().train_ids(0), vec![0, 1, 2, 3, 4]);
    assert!(FoldPlan::even(2, 3).is_err());
    assert!(FoldPlan::from_folds(vec![vec![0, 1], vec![1]]).is_err());
    assert!(FoldPlan::from_folds(vec![vec![2, 0], vec![1]]).is_ok());
}

/// Blob samples split into images; within an image, samples of the same
/// class form a chain so neighborhoods are spatially coherent.
fn blob_images(n_images: usize, per_image: usize, seed: u64) -> Vec<ImageSample> {
    let data = feature_blobs(n_images * per_image, 5, 3, 6.0, seed).unwrap();
    (0..n_images)
        .map(|i| {
            let mut ids: Vec<usize> = (i * per_image..(i + 1) * per_image).collect();
            ids.sort_by_key(|&j| data.labels()[j]);
            let truth: Vec<usize> = ids.iter().map(|&j| data.labels()[j]).collect();
            let edges: Vec<_> = (1..ids.len())
                .filter(|&k| truth[k] == truth[k - 1])
                .map(|k| (k - 1, k, 12.0))
                .collect();
            ImageSample {
                features: data.features().select_rows(&ids).unwrap(),
                graph: NeighborGraph::from_edges(ids.len(), &edges).unwrap(),
                truth,
            }
        })
        .collect()
}

#[test]
fn single_fold_nearest_neighbor_is_diagonal() {
    let samples = blob_images(4, 30, 4);
    let plan = FoldPlan::even(4, 1).unwrap();
    let opts = CvOptions {
        algorithm: Algorithm::Pknn(PknnParams { k: 1, ..Default::default() }),
        normalize: true,
        seed: 0,
    };
    let report = run_cross_validation(&samples, &names(3), &plan, &opts).unwrap();
    assert_eq!(report.pooled().accuracy(), 1.0);
    assert_eq!(report.pooled().total(), 120);
}

#[test]
fn cross_validation_is_deterministic() {
    let samples = blob_images(6, 40, 5);
    let plan = FoldPlan::even(6, 3).unwrap();
    for algorithm in [
        Algorithm::Pflicm(PflicmParams { n_clusters: 3, ..Default::default() }),
        Algorithm::Pknn(PknnParams::default()),
    ] {
        let opts = CvOptions { algorithm, normalize: true, seed: 9 };
        let a = run_cross_validation(&samples, &names(3), &plan, &opts).unwrap();
        let b = run_cross_validation(&samples, &names(3), &plan, &opts).unwrap();
        assert_eq!(a.folds.len(), 3);
        for (x, y) in a.folds.iter().zip(&b.folds) {
            assert_eq!(x.confusion, y.confusion);
            assert_eq!(x.predictions, y.predictions);
        }
        assert_eq!(a.pooled().total(), 240);
        assert!(a.pooled().accuracy() > 0.9, "{}: {}", algorithm.name(), a.pooled().accuracy());
    }
}

#[test]
fn missing_training_class_is_reported_not_fatal() {
    let f = FeatureMatrix::new(array![[0.0], [0.1], [5.0], [5.1]]).unwrap();
    let mk = |ids: &[usize], truth: Vec<usize>| ImageSample {
        features: f.select_rows(ids).unwrap(),
        graph: NeighborGraph::empty(ids.len()),
        truth,
    };
    let samples = vec![mk(&[0, 1], vec![0, 0]), mk(&[2, 3], vec![1, 1])];
    let plan = FoldPlan::even(2, 2).unwrap();
    let opts = CvOptions {
        algorithm: Algorithm::Pknn(PknnParams { k: 1, ..Default::default() }),
        normalize: false,
        seed: 0,
    };
    let report = run_cross_validation(&samples, &names(2), &plan, &opts).unwrap();
    assert_eq!(report.folds[0].missing_classes, vec![0]);
    assert_eq!(report.folds[1].missing_classes, vec![1]);
}

#[test]
fn timing_table_has_one_row_per_size() {
    let spec = TimingSpec {
        algorithm: Algorithm::Pknn(PknnParams::default()),
        sizes: vec![50, 100, 200],
        vary: Vary::Test { fixed: 100 },
        n_dims: 4,
        n_classes: 2,
        repetitions: 3,
        seed: 1,
    };
    let rows = timing_benchmark(&spec).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].n_test, 200);
    assert!(rows.iter().all(|r| r.n_train == 100 && r.test_secs >= 0.0));
    let csv = String::from_utf8(TimingRow::to_csv(&rows).unwrap()).unwrap();
    assert!(csv.starts_with("n_train,n_test,train_secs,test_secs"));
}
