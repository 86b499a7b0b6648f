//! Shared domain types and parameter bundles.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that membership columns sum to one.
pub const MEMBERSHIP_SUM_TOL: f64 = 1e-9;

/// Row-major dense matrix in its serialized form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&Array2<f64>> for RawMatrix {
    fn from(a: &Array2<f64>) -> Self {
        RawMatrix {
            rows: a.nrows(),
            cols: a.ncols(),
            data: a.iter().copied().collect(),
        }
    }
}

impl TryFrom<RawMatrix> for Array2<f64> {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Array2::from_shape_vec((raw.rows, raw.cols), raw.data)
            .map_err(|e| Error::Shape(format!("serialized matrix: {e}")))
    }
}

/// `#[serde(with = ...)]` adapter for `Array2<f64>`.
pub(crate) mod serde_array2 {
    use super::RawMatrix;
    use ndarray::Array2;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(a: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        RawMatrix::from(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let raw = RawMatrix::deserialize(d)?;
        Array2::try_from(raw).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn ensure_finite<'a>(
    values: impl IntoIterator<Item = &'a f64>,
    what: &'static str,
) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

/// Squared Euclidean distance, summed in dimension order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// N samples × d features, every entry finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct FeatureMatrix {
    data: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "feature matrix must be non-empty, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        ensure_finite(data.iter(), "feature matrix")?;
        // Row slices are handed out as `&[f64]`, which needs standard layout.
        let data = if data.is_standard_layout() {
            data
        } else {
            data.as_standard_layout().into_owned()
        };
        Ok(FeatureMatrix { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(data)
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.data.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_dims();
        &self.data.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data
            .as_slice()
            .expect("standard layout")
            .chunks_exact(self.n_dims())
    }

    pub fn view(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn vstack<'a>(parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let views: Vec<_> = parts.into_iter().map(|m| m.data.view()).collect();
        if views.is_empty() {
            return Err(Error::InvalidInput("nothing to stack".into()));
        }
        let stacked = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Shape(format!("vstack: {e}")))?;
        Self::new(stacked)
    }

    /// Select a subset of rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Self::new(self.data.select(Axis(0), idx))
    }
}

impl From<FeatureMatrix> for RawMatrix {
    fn from(m: FeatureMatrix) -> Self {
        RawMatrix::from(&m.data)
    }
}

impl TryFrom<RawMatrix> for FeatureMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        FeatureMatrix::new(Array2::try_from(raw)?)
    }
}

/// Per-feature z-score normalization fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZScore {
    /// Population mean and standard deviation per column. Constant columns get
    /// a unit scale so they map to zero.
    pub fn fit(features: &FeatureMatrix) -> Self {
        let x = features.view();
        let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x
            .axis_iter(Axis(1))
            .zip(mean.iter())
            .map(|(col, &mu)| {
                let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / col.len() as f64;
                let s = var.sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        ZScore {
            mean: mean.to_vec(),
            std,
        }
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.n_dims() != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalizer has {} dims, features have {}",
                self.mean.len(),
                features.n_dims()
            )));
        }
        let mut out = features.view().clone();
        for mut row in out.rows_mut() {
            for ((v, mu), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - mu) / s;
            }
        }
        FeatureMatrix::new(out)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Shape("normalizer mean/std length mismatch".into()));
        }
        ensure_finite(self.mean.iter().chain(&self.std), "normalizer")?;
        if self.std.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParam("normalizer std must be positive".into()));
        }
        Ok(())
    }
}

/// PFLICM objective weights, fuzzifiers and loop controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PflicmParams {
    /// Weight on the fuzzy-membership terms.
    pub a: f64,
    /// Weight on the typicality terms.
    pub b: f64,
    /// Membership fuzzifier.
    pub m: f64,
    /// Typicality fuzzifier.
    pub q: f64,
    pub n_clusters: usize,
    /// Neighborhood radius in adjacency hops between superpixels.
    pub window_radius: usize,
    pub max_iters: usize,
    /// Stopping threshold on the largest membership change.
    pub tol: f64,
}

impl Default for PflicmParams {
    fn default() -> Self {
        PflicmParams {
            a: 14.0,
            b: 1.4,
            m: 1.8,
            q: 2.8,
            n_clusters: 4,
            window_radius: 1,
            max_iters: 300,
            tol: 1e-5,
        }
    }
}

impl PflicmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if !(self.a.is_finite() && self.b.is_finite() && self.m.is_finite() && self.q.is_finite()) {
            return bad("PFLICM weights and fuzzifiers must be finite".into());
        }
        if self.a < 0.0 || self.b < 0.0 {
            return bad(format!("a and b must be >= 0 (a={}, b={})", self.a, self.b));
        }
        if self.a + self.b <= 0.0 {
            return bad("a + b must be > 0".into());
        }
        if self.m <= 1.0 {
            return bad(format!("membership fuzzifier m must be > 1, got {}", self.m));
        }
        if self.q <= 1.0 {
            return bad(format!("typicality fuzzifier q must be > 1, got {}", self.q));
        }
        if self.n_clusters < 1 {
            return bad("n_clusters must be >= 1".into());
        }
        if self.window_radius < 1 {
            return bad("window_radius must be >= 1".into());
        }
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        Ok(())
    }
}

/// Possibilistic k-NN parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PknnParams {
    /// Neighbor count K.
    pub k: usize,
    /// Weight fuzzifier.
    pub m: f64,
    /// Closeness radius within which a neighbor gets full weight.
    pub eta: f64,
}

impl Default for PknnParams {
    fn default() -> Self {
        PknnParams {
            k: 6,
            m: 2.0,
            eta: 0.01,
        }
    }
}

impl PknnParams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParam("k must be >= 1".into()));
        }
        if !(self.m.is_finite() && self.m > 1.0) {
            return Err(Error::InvalidParam(format!(
                "weight fuzzifier m must be > 1, got {}",
                self.m
            )));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "eta must be >= 0, got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Fuzzy memberships and possibilistic typicalities, clusters × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMaps {
    memberships: Array2<f64>,
    typicalities: Array2<f64>,
    class_names: Vec<String>,
}

impl AssignmentMaps {
    pub fn new(
        memberships: Array2<f64>,
        typicalities: Array2<f64>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if memberships.dim() != typicalities.dim() {
            return Err(Error::Shape(format!(
                "memberships {:?} vs typicalities {:?}",
                memberships.dim(),
                typicalities.dim()
            )));
        }
        if class_names.len() != memberships.nrows() {
            return Err(Error::Shape(format!(
                "{} row names for {} rows",
                class_names.len(),
                memberships.nrows()
            )));
        }
        ensure_finite(memberships.iter(), "memberships")?;
        ensure_finite(typicalities.iter(), "typicalities")?;
        check_column_stochastic(&memberships)?;
        if typicalities.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidInput("typicality outside [0, 1]".into()));
        }
        Ok(AssignmentMaps {
            memberships,
            typicalities,
            class_names,
        })
    }

    pub fn memberships(&self) -> &Array2<f64> {
        &self.memberships
    }

    pub fn typicalities(&self) -> &Array2<f64> {
        &self.typicalities
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_clusters(&self) -> usize {
        self.memberships.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.memberships.ncols()
    }

    /// Elementwise membership × typicality.
    pub fn products(&self) -> Array2<f64> {
        &self.memberships * &self.typicalities
    }
}

/// Checks the sum-to-one and range constraints on a C×N membership matrix.
pub fn check_column_stochastic(u: &Array2<f64>) -> Result<()> {
    for (n, col) in u.axis_iter(Axis(1)).enumerate() {
        if col.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(format!(
                "membership outside [0, 1] in column {n}"
            )));
        }
        let s: f64 = col.sum();
        if (s - 1.0).abs() > MEMBERSHIP_SUM_TOL {
            return Err(Error::InvalidInput(format!(
                "membership column {n} sums to {s}, not 1"
            )));
        }
    }
    Ok(())
}

/// Features with dense class ids `0..l` and a parallel name table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: FeatureMatrix,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: FeatureMatrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if labels.len() != features.n_samples() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                features.n_samples()
            )));
        }
        validate_class_names(&class_names)?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidInput(format!(
                "label {bad} outside [0, {})",
                class_names.len()
            )));
        }
        Ok(LabeledDataset {
            features,
            labels,
            class_names,
        })
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

pub(crate) fn validate_class_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::InvalidInput("class name table is empty".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate class name {n:?}")));
        }
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn feature_matrix_rejects_non_finite() {
        let err = FeatureMatrix::new(array![[1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert!(FeatureMatrix::new(array![[1.0, f64::INFINITY]]).is_err());
    }

    #[test]
    fn feature_matrix_rejects_empty() {
        assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
        assert!(FeatureMatrix::new(Array2::zeros((3, 0))).is_err());
    }

    #[test]
    fn feature_matrix_serde_round_trip() {
        let m = FeatureMatrix::new(array![[0.1, 1.0 / 3.0], [std::f64::consts::PI, -2.5e-300]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: FeatureMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<FeatureMatrix>(r#"{"rows":1,"cols":2,"data":[1.0]}"#).is_err());
    }

    #[test]
    fn params_defaults_are_valid() {
        PflicmParams::default().validate().unwrap();
        PknnParams::default().validate().unwrap();
        let p = PflicmParams::default();
        assert_eq!((p.a, p.b, p.m, p.q, p.n_clusters), (14.0, 1.4, 1.8, 2.8, 4));
        let k = PknnParams::default();
        assert_eq!((k.k, k.m, k.eta), (6, 2.0, 0.01));
    }

    #[test]
    fn params_reject_bad_fuzzifiers() {
        let p = PflicmParams { m: 1.0, ..Default::default() };
        assert!(p.validate().unwrap_err().to_string().contains("m must be > 1"));
        let p = PflicmParams { q: 0.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = PflicmParams { a: 0.0, b: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let k = PknnParams { m: 1.0, ..Default::default() };
        assert!(k.validate().is_err());
        let k = PknnParams { eta: -1.0, ..Default::default() };
        assert!(k.validate().is_err());
    }

    #[test]
    fn assignment_maps_check_constraints() {
        let u = array![[0.25, 1.0], [0.75, 0.0]];
        let t = array![[0.9, 0.9], [0.9, 0.1]];
        let names = vec!["a".to_string(), "b".to_string()];
        AssignmentMaps::new(u.clone(), t.clone(), names.clone()).unwrap();
        let bad_u = array![[0.3, 1.0], [0.75, 0.0]];
        assert!(AssignmentMaps::new(bad_u, t.clone(), names.clone()).is_err());
        let bad_t = array![[1.1, 0.9], [0.9, 0.1]];
        assert!(AssignmentMaps::new(u, bad_t, names).is_err());
    }

    #[test]
    fn labeled_dataset_validates_labels() {
        let f = FeatureMatrix::new(array![[0.0], [1.0]]).unwrap();
        let names = vec!["x".to_string(), "y".to_string()];
        assert!(LabeledDataset::new(f.clone(), vec![0, 2], names.clone()).is_err());
        assert!(LabeledDataset::new(f.clone(), vec![0], names.clone()).is_err());
        assert!(LabeledDataset::new(f.clone(), vec![0, 1], vec!["x".into(), "x".into()]).is_err());
        let ds = LabeledDataset::new(f, vec![1, 1], names).unwrap();
        assert_eq!(ds.class_counts(), vec![0, 2]);
    }

    #[test]
    fn zscore_maps_to_zero_mean_unit_variance() {
        let f = FeatureMatrix::new(array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]]).unwrap();
        let z = ZScore::fit(&f);
        let n = z.apply(&f).unwrap();
        let col0: Vec<f64> = n.rows().map(|r| r[0]).collect();
        let mean: f64 = col0.iter().sum::<f64>() / 3.0;
        let var: f64 = col0.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        assert!(n.rows().all(|r| r[1] == 0.0));
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(array![0.2, 0.7, 0.7].view()), 1);
        assert_eq!(argmax(array![0.5, 0.5].view()), 0);
    }
}
