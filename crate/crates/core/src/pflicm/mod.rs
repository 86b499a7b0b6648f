//! Possibilistic fuzzy local-information c-means over superpixel features.
//!
//! Fitting alternates membership, typicality, center and scale updates. The
//! membership update uses a spatial fuzzy factor computed from the previous
//! iteration's memberships and held fixed while updating. After training,
//! clusters can be assigned class labels from a labeled training set, and
//! the frozen model produces memberships and typicalities for new images.

mod graph;
mod updates;

use ndarray::{Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    ensure_finite, validate_class_names, AssignmentMaps, FeatureMatrix, LabeledDataset,
    PflicmParams, ZScore,
};

pub use graph::{build_neighbor_graph, NeighborGraph};
pub use updates::{
    fuzzy_factor, fuzzy_factors, memberships_from_distances, objective, objective_terms,
    squared_distances, update_centers, update_gammas, update_memberships, update_typicalities,
    ObjectiveTerms, GAMMA_FLOOR,
};

/// Class assignment of each cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLabels {
    /// Class id of each cluster.
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
}

/// A trained PFLICM model: centers and typicality scales, optionally labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct PflicmModel {
    /// Cluster centers, clusters × dims.
    pub centers: Array2<f64>,
    pub gammas: Vec<f64>,
    pub params: PflicmParams,
    pub cluster_labels: Option<ClusterLabels>,
    /// Feature normalization the model was trained under, if any.
    pub normalizer: Option<ZScore>,
}

impl PflicmModel {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        ensure_finite(self.centers.iter(), "cluster centers")?;
        ensure_finite(self.gammas.iter(), "cluster gammas")?;
        if self.centers.nrows() != self.params.n_clusters || self.gammas.len() != self.centers.nrows() {
            return Err(Error::Shape(format!(
                "{} centers, {} gammas, {} clusters configured",
                self.centers.nrows(),
                self.gammas.len(),
                self.params.n_clusters
            )));
        }
        if self.gammas.iter().any(|&g| g <= 0.0) {
            return Err(Error::InvalidInput("cluster gammas must be > 0".into()));
        }
        if let Some(labels) = &self.cluster_labels {
            validate_class_names(&labels.class_names)?;
            if labels.classes.len() != self.centers.nrows() {
                return Err(Error::Shape("one class label per cluster required".into()));
            }
            if labels.classes.iter().any(|&c| c >= labels.class_names.len()) {
                return Err(Error::InvalidInput("cluster label outside class table".into()));
            }
        }
        if let Some(z) = &self.normalizer {
            z.validate()?;
            if z.mean.len() != self.n_dims() {
                return Err(Error::Shape("normalizer width differs from centers".into()));
            }
        }
        Ok(())
    }

    pub fn n_clusters(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.centers.ncols()
    }

    /// Apply the stored normalizer, if any, to raw features.
    pub fn prepare(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        match &self.normalizer {
            Some(z) => z.apply(features),
            None => Ok(features.clone()),
        }
    }

    pub fn labels(&self) -> Result<&ClusterLabels> {
        self.cluster_labels.as_ref().ok_or(Error::Unlabeled)
    }

    /// Memberships and typicalities with rows named `cluster{c}`.
    pub fn assign(&self, features: &FeatureMatrix, graph: &NeighborGraph) -> Result<AssignmentMaps> {
        self.check_inputs(features, graph)?;
        let (u, t) = frozen_assignments(features, graph, &self.centers, &self.gammas, &self.params);
        let names = (0..self.n_clusters()).map(|c| format!("cluster{c}")).collect();
        AssignmentMaps::new(u, t, names)
    }

    /// Memberships and typicalities with rows named by each cluster's class.
    pub fn predict(&self, features: &FeatureMatrix, graph: &NeighborGraph) -> Result<AssignmentMaps> {
        let labels = self.labels()?;
        self.check_inputs(features, graph)?;
        let (u, t) = frozen_assignments(features, graph, &self.centers, &self.gammas, &self.params);
        let names = labels
            .classes
            .iter()
            .map(|&c| labels.class_names[c].clone())
            .collect();
        AssignmentMaps::new(u, t, names)
    }

    /// Per-class score maps (classes × samples): the largest `u·t` among the
    /// clusters carrying each class, zero for classes without a cluster.
    pub fn class_products(&self, maps: &AssignmentMaps) -> Result<Array2<f64>> {
        let labels = self.labels()?;
        let prod = maps.products();
        let mut out = Array2::zeros((labels.class_names.len(), maps.n_samples()));
        for (c, &class) in labels.classes.iter().enumerate() {
            Zip::from(out.row_mut(class))
                .and(prod.row(c))
                .for_each(|o, &p| *o = f64::max(*o, p));
        }
        Ok(out)
    }

    fn check_inputs(&self, features: &FeatureMatrix, graph: &NeighborGraph) -> Result<()> {
        if features.n_dims() != self.n_dims() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_dims(),
                features.n_dims()
            )));
        }
        if graph.len() != features.n_samples() {
            return Err(Error::Shape(format!(
                "graph has {} nodes for {} samples",
                graph.len(),
                features.n_samples()
            )));
        }
        Ok(())
    }
}

/// Memberships iterated to `tol` with fixed centers, then typicalities once.
fn frozen_assignments(
    features: &FeatureMatrix,
    graph: &NeighborGraph,
    centers: &Array2<f64>,
    gammas: &[f64],
    params: &PflicmParams,
) -> (Array2<f64>, Array2<f64>) {
    let d2 = squared_distances(features, centers);
    let mut u = memberships_from_distances(&d2, params.m);
    for _ in 0..params.max_iters {
        let g = fuzzy_factors(&u, &d2, graph, params.m);
        let next = memberships_from_distances(&(&d2 + &g), params.m);
        let delta = max_abs_diff(&next, &u);
        u = next;
        if delta < params.tol {
            break;
        }
    }
    let t = updates::typicalities_from_distances(&d2, gammas, params);
    (u, t)
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |m, &x, &y| f64::max(m, (x - y).abs()))
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub max_delta_u: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: PflicmModel,
    /// Assignments of the training samples under the final, frozen model.
    pub assignments: AssignmentMaps,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    /// Clusters whose center update stalled on zero total weight at any point.
    pub stalled_clusters: Vec<usize>,
}

/// State after one fitting iteration, as seen by [`fit_observed`].
#[derive(Debug, Clone, Copy)]
pub struct IterationView<'a> {
    pub iter: usize,
    pub memberships: &'a Array2<f64>,
    pub typicalities: &'a Array2<f64>,
    pub centers: &'a Array2<f64>,
    pub gammas: &'a [f64],
    pub objective: f64,
}

/// Alternating optimization from `n_clusters` distinct random samples.
pub fn fit(
    features: &FeatureMatrix,
    graph: &NeighborGraph,
    params: &PflicmParams,
    seed: u64,
) -> Result<FitResult> {
    fit_observed(features, graph, params, seed, |_| {})
}

/// [`fit`], calling `observe` after every iteration.
pub fn fit_observed(
    features: &FeatureMatrix,
    graph: &NeighborGraph,
    params: &PflicmParams,
    seed: u64,
    mut observe: impl FnMut(IterationView<'_>),
) -> Result<FitResult> {
    params.validate()?;
    let n = features.n_samples();
    let n_clusters = params.n_clusters;
    if n < n_clusters {
        return Err(Error::TooFewSamples {
            needed: n_clusters,
            got: n,
        });
    }
    if graph.len() != n {
        return Err(Error::Shape(format!("graph has {} nodes for {n} samples", graph.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = rand::seq::index::sample(&mut rng, n, n_clusters);
    let mut centers = features.select_rows(&picks.into_vec())?.into_inner();

    let d2 = squared_distances(features, &centers);
    let mut u = memberships_from_distances(&d2, params.m);
    let mut gammas = updates::gammas_from_distances(&d2, &u, params.m);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut stalled_any = vec![false; n_clusters];
    for iter in 1..=params.max_iters {
        let u_next = update_memberships(features, &centers, graph, params, &u);
        let t = update_typicalities(features, &centers, &gammas, params);
        let (new_centers, stalled) = update_centers(features, &u_next, &t, params, &centers);
        centers = new_centers;
        for (acc, s) in stalled_any.iter_mut().zip(stalled) {
            *acc |= s;
        }
        gammas = update_gammas(features, &centers, &u_next, params);

        let delta = max_abs_diff(&u_next, &u);
        u = u_next;
        let j = objective(features, graph, &u, &t, &centers, &gammas, params);
        log::trace!("pflicm iter {iter}: J = {j:.6e}, max dU = {delta:.3e}");
        trace.push(TraceRow {
            iter,
            objective: j,
            max_delta_u: delta,
        });
        observe(IterationView {
            iter,
            memberships: &u,
            typicalities: &t,
            centers: &centers,
            gammas: &gammas,
            objective: j,
        });
        if !j.is_finite() {
            return Err(Error::NonFinite { what: "PFLICM objective" });
        }
        // The first update starts from memberships of the same centers, so a
        // small change there says nothing about convergence.
        if iter > 1 && delta < params.tol {
            converged = true;
            break;
        }
    }

    let model = PflicmModel {
        centers,
        gammas,
        params: *params,
        cluster_labels: None,
        normalizer: None,
    };
    model.validate()?;
    let assignments = model.assign(features, graph)?;
    Ok(FitResult {
        model,
        assignments,
        trace,
        converged,
        stalled_clusters: stalled_any
            .iter()
            .enumerate()
            .filter_map(|(c, &s)| s.then_some(c))
            .collect(),
    })
}

/// Outcome of [`label_clusters`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelReport {
    /// Per-cluster class weight sums `Σ u·t`, clusters × classes.
    pub weights: Array2<f64>,
    /// Clusters with zero total weight that fell back to the majority class.
    pub fallback_clusters: Vec<usize>,
}

/// Give each cluster the class with the largest `Σ u_cn · t_cn` over the
/// labeled training samples; ties go to the lowest class id.
pub fn label_clusters(
    model: &PflicmModel,
    labeled: &LabeledDataset,
    assignments: &AssignmentMaps,
) -> Result<(PflicmModel, LabelReport)> {
    if assignments.n_samples() != labeled.len() || assignments.n_clusters() != model.n_clusters() {
        return Err(Error::Shape(format!(
            "assignments {}x{} vs {} clusters and {} labeled samples",
            assignments.n_clusters(),
            assignments.n_samples(),
            model.n_clusters(),
            labeled.len()
        )));
    }
    let l = labeled.n_classes();
    let prod = assignments.products();
    let mut weights = Array2::zeros((model.n_clusters(), l));
    for (n, &class) in labeled.labels().iter().enumerate() {
        for c in 0..model.n_clusters() {
            weights[[c, class]] += prod[[c, n]];
        }
    }
    let majority = crate::types::argmax(
        ndarray::Array1::from_iter(labeled.class_counts().iter().map(|&k| k as f64)).view(),
    );
    let mut classes = Vec::with_capacity(model.n_clusters());
    let mut fallback_clusters = Vec::new();
    for (c, row) in weights.rows().into_iter().enumerate() {
        if row.sum() > 0.0 {
            classes.push(crate::types::argmax(row));
        } else {
            log::warn!("cluster {c} has no weight on labeled data; using majority class");
            classes.push(majority);
            fallback_clusters.push(c);
        }
    }
    let mut labeled_model = model.clone();
    labeled_model.cluster_labels = Some(ClusterLabels {
        classes,
        class_names: labeled.class_names().to_vec(),
    });
    Ok((
        labeled_model,
        LabelReport {
            weights,
            fallback_clusters,
        },
    ))
}
