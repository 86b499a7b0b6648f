//! Possibilistic k-nearest-neighbor classification.
//!
//! Training samples get soft class labels from the classes of their own
//! nearest training neighbors. A query's confidence in each class is the
//! average over its K nearest training samples of the neighbor's soft label
//! times a distance weight that is 1 within `eta` and decays beyond it.
//! Confidences do not sum to one, so a query far from all training data is
//! unlikely under every class.

mod kdtree;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{
    validate_class_names, FeatureMatrix, LabeledDataset, PknnParams, ZScore,
};

pub use kdtree::{KdTree, LEAF_SIZE};

/// Own-class floor of the soft labels.
const OWN_CLASS_BASE: f64 = 0.51;
/// Share of the soft label distributed by neighbor votes.
const VOTE_SHARE: f64 = 0.49;

/// The `k` nearest indexed points to `query`, nearest first, ties by index.
pub fn knn_search(index: &KdTree, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
    index.knn(query, k)
}

/// Soft labels, samples × classes. For each training sample with true class
/// `j` and `n_i` of its `k` nearest other samples in class `i`:
/// `0.51 + 0.49 n_j / k` for `j` and `0.49 n_i / k` elsewhere.
pub fn init_fuzzy_labels(train: &LabeledDataset, k: usize) -> Result<Array2<f64>> {
    let index = KdTree::build(train.features().clone());
    fuzzy_labels_with(&index, train, k)
}

fn fuzzy_labels_with(index: &KdTree, train: &LabeledDataset, k: usize) -> Result<Array2<f64>> {
    let n = train.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if k < 1 || k > n - 1 {
        return Err(Error::InvalidParam(format!(
            "k = {k} must be in [1, {}] for {n} training samples",
            n - 1
        )));
    }
    let l = train.n_classes();
    let labels = train.labels();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut hits = index.knn(train.features().row(i), k + 1)?;
            // Usually the sample itself comes first, but an exact duplicate
            // with a lower index may precede it.
            match hits.iter().position(|&(j, _)| j == i) {
                Some(p) => {
                    hits.remove(p);
                }
                None => {
                    hits.pop();
                }
            }
            let mut counts = vec![0usize; l];
            for &(j, _) in &hits {
                counts[labels[j]] += 1;
            }
            Ok(counts
                .iter()
                .enumerate()
                .map(|(c, &cnt)| {
                    let vote = cnt as f64 / k as f64 * VOTE_SHARE;
                    if c == labels[i] {
                        OWN_CLASS_BASE + vote
                    } else {
                        vote
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, l), flat).expect("n rows of l entries"))
}

/// `1 / (1 + max(0, distance − eta)^(2/(m−1)))`.
pub fn possibilistic_weight(distance: f64, params: &PknnParams) -> f64 {
    let excess = (distance - params.eta).max(0.0);
    1.0 / (1.0 + excess.powf(2.0 / (params.m - 1.0)))
}

/// A fitted possibilistic k-NN classifier.
#[derive(Debug, Clone)]
pub struct PknnModel {
    train_labels: Vec<usize>,
    /// Soft labels, samples × classes.
    train_fuzzy: Array2<f64>,
    class_names: Vec<String>,
    params: PknnParams,
    /// Feature normalization the model was trained under, if any.
    normalizer: Option<ZScore>,
    index: KdTree,
}

impl PartialEq for PknnModel {
    fn eq(&self, other: &Self) -> bool {
        self.train_features() == other.train_features()
            && self.train_labels == other.train_labels
            && self.train_fuzzy == other.train_fuzzy
            && self.class_names == other.class_names
            && self.params == other.params
            && self.normalizer == other.normalizer
    }
}

impl PknnModel {
    /// Reassemble a model from stored parts, rebuilding the search index and
    /// checking that the soft labels are consistent with the vote rule.
    pub fn from_parts(
        train_features: FeatureMatrix,
        train_labels: Vec<usize>,
        train_fuzzy: Array2<f64>,
        class_names: Vec<String>,
        params: PknnParams,
        normalizer: Option<ZScore>,
    ) -> Result<Self> {
        params.validate()?;
        validate_class_names(&class_names)?;
        let n = train_features.n_samples();
        if train_labels.len() != n || train_fuzzy.dim() != (n, class_names.len()) {
            return Err(Error::Shape(format!(
                "{n} training rows, {} labels, soft labels {:?}, {} classes",
                train_labels.len(),
                train_fuzzy.dim(),
                class_names.len()
            )));
        }
        if params.k > n {
            return Err(Error::TooFewSamples { needed: params.k, got: n });
        }
        check_fuzzy_rows(&train_fuzzy, &train_labels, params.k)?;
        if let Some(z) = &normalizer {
            z.validate()?;
            if z.mean.len() != train_features.n_dims() {
                return Err(Error::Shape("normalizer width differs from training features".into()));
            }
        }
        Ok(PknnModel {
            train_labels,
            train_fuzzy,
            class_names,
            params,
            normalizer,
            index: KdTree::build(train_features),
        })
    }

    pub fn train_features(&self) -> &FeatureMatrix {
        self.index.points()
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    pub fn train_fuzzy(&self) -> &Array2<f64> {
        &self.train_fuzzy
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn params(&self) -> &PknnParams {
        &self.params
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn normalizer(&self) -> Option<&ZScore> {
        self.normalizer.as_ref()
    }

    /// Apply the stored normalizer, if any, to raw features.
    pub fn prepare(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        match &self.normalizer {
            Some(z) => z.apply(features),
            None => Ok(features.clone()),
        }
    }

    pub fn with_normalizer(mut self, normalizer: Option<ZScore>) -> Result<Self> {
        if let Some(z) = &normalizer {
            z.validate()?;
            if z.mean.len() != self.index.n_dims() {
                return Err(Error::Shape("normalizer width differs from training features".into()));
            }
        }
        self.normalizer = normalizer;
        Ok(self)
    }

    /// Per-class confidences for one query.
    pub fn classify(&self, query: &[f64]) -> Result<Vec<f64>> {
        let k = self.params.k;
        let neighbors = self.index.knn(query, k)?;
        let mut conf = vec![0.0; self.n_classes()];
        for &(j, dist) in &neighbors {
            let w = possibilistic_weight(dist, &self.params);
            for (c, &mu) in conf.iter_mut().zip(self.train_fuzzy.row(j)) {
                *c += mu * w;
            }
        }
        for c in &mut conf {
            *c /= k as f64;
        }
        Ok(conf)
    }

    /// Confidences for every row of `queries`, classes × samples.
    pub fn classify_batch(&self, queries: &FeatureMatrix) -> Result<Array2<f64>> {
        let per_sample: Vec<Vec<f64>> = (0..queries.n_samples())
            .into_par_iter()
            .map(|i| self.classify(queries.row(i)))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((self.n_classes(), queries.n_samples()));
        for (mut col, conf) in out.axis_iter_mut(Axis(1)).zip(per_sample) {
            for (o, v) in col.iter_mut().zip(conf) {
                *o = v;
            }
        }
        Ok(out)
    }
}

/// Every soft-label row must be the vote rule applied to some neighbor
/// counts that sum to `k`.
fn check_fuzzy_rows(fuzzy: &Array2<f64>, labels: &[usize], k: usize) -> Result<()> {
    let unit = VOTE_SHARE / k as f64;
    for (i, row) in fuzzy.rows().into_iter().enumerate() {
        let own = labels[i];
        if own >= row.len() {
            return Err(Error::InvalidInput(format!("training label {own} outside class table")));
        }
        let mut total = 0.0;
        for (c, &v) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("soft label {v} outside [0, 1] in row {i}")));
            }
            let votes = if c == own { v - OWN_CLASS_BASE } else { v } / unit;
            if votes < -1e-9 || (votes - votes.round()).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "soft label row {i} is not a neighbor vote over k = {k}"
                )));
            }
            total += votes.round();
        }
        if total != k as f64 {
            return Err(Error::InvalidInput(format!(
                "soft label row {i} counts {total} votes, expected {k}"
            )));
        }
    }
    Ok(())
}

/// Build the index and soft labels. Needs at least `k + 1` samples.
pub fn fit(train: &LabeledDataset, params: &PknnParams) -> Result<PknnModel> {
    params.validate()?;
    if train.len() < params.k + 1 {
        return Err(Error::TooFewSamples {
            needed: params.k + 1,
            got: train.len(),
        });
    }
    let index = KdTree::build(train.features().clone());
    let train_fuzzy = fuzzy_labels_with(&index, train, params.k)?;
    Ok(PknnModel {
        train_labels: train.labels().to_vec(),
        train_fuzzy,
        class_names: train.class_names().to_vec(),
        params: *params,
        normalizer: None,
        index,
    })
}

#[cfg(test)]
mod tests;
