//! The individual alternating-optimization steps and the objective.
//!
//! Matrices are laid out clusters × samples for U, T and the squared
//! distance table, and clusters × dims for the centers.

use ndarray::{Array2, Axis};

use super::NeighborGraph;
use crate::types::{squared_distance, FeatureMatrix, PflicmParams};

/// Smallest allowed cluster scale.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// `‖x_n − c_c‖²` for every cluster and sample.
pub fn squared_distances(features: &FeatureMatrix, centers: &Array2<f64>) -> Array2<f64> {
    let centers = centers.as_standard_layout();
    let mut d2 = Array2::zeros((centers.nrows(), features.n_samples()));
    for (c, center) in centers.rows().into_iter().enumerate() {
        let center = center.as_slice().expect("standard layout");
        for (n, x) in features.rows().enumerate() {
            d2[[c, n]] = squared_distance(x, center);
        }
    }
    d2
}

/// Spatial fuzzy factor for one sample and cluster:
/// `Σ_{k ∈ N(n)} (1 − u_ck)^m ‖x_k − c_c‖² / (d_nk + 1)`.
pub fn fuzzy_factor(
    n: usize,
    c: usize,
    u: &Array2<f64>,
    centers: &Array2<f64>,
    graph: &NeighborGraph,
    features: &FeatureMatrix,
    m: f64,
) -> f64 {
    let center = centers.row(c).to_vec();
    graph
        .neighbors(n)
        .iter()
        .map(|&(k, d)| {
            (1.0 - u[[c, k]]).powf(m) * squared_distance(features.row(k), &center) / (d + 1.0)
        })
        .sum()
}

/// Fuzzy factors for all clusters and samples from a precomputed distance table.
pub fn fuzzy_factors(u: &Array2<f64>, d2: &Array2<f64>, graph: &NeighborGraph, m: f64) -> Array2<f64> {
    let (n_clusters, n_samples) = u.dim();
    let mut g = Array2::zeros((n_clusters, n_samples));
    for n in 0..n_samples {
        for &(k, d) in graph.neighbors(n) {
            for c in 0..n_clusters {
                g[[c, n]] += (1.0 - u[[c, k]]).powf(m) * d2[[c, k]] / (d + 1.0);
            }
        }
    }
    g
}

/// Memberships from generalized distances `D` (clusters × samples):
/// `u_cn = 1 / Σ_k (D_cn / D_kn)^(1/(m−1))`. A column with a zero distance
/// assigns full membership to the lowest such cluster.
pub fn memberships_from_distances(dist: &Array2<f64>, m: f64) -> Array2<f64> {
    let exponent = 1.0 / (m - 1.0);
    let mut u = Array2::zeros(dist.dim());
    for (n, col) in dist.axis_iter(Axis(1)).enumerate() {
        if let Some(zero) = col.iter().position(|&d| d <= 0.0) {
            u[[zero, n]] = 1.0;
            continue;
        }
        let dmin = col.iter().copied().fold(f64::INFINITY, f64::min);
        let ratios: Vec<f64> = col.iter().map(|&d| (dmin / d).powf(exponent)).collect();
        let total: f64 = ratios.iter().sum();
        for (c, r) in ratios.iter().enumerate() {
            u[[c, n]] = r / total;
        }
    }
    u
}

/// Membership update with the fuzzy factor computed from `u_prev` and held
/// fixed.
pub fn update_memberships(
    features: &FeatureMatrix,
    centers: &Array2<f64>,
    graph: &NeighborGraph,
    params: &PflicmParams,
    u_prev: &Array2<f64>,
) -> Array2<f64> {
    let d2 = squared_distances(features, centers);
    let g = fuzzy_factors(u_prev, &d2, graph, params.m);
    memberships_from_distances(&(d2 + g), params.m)
}

/// `t_cn = 1 / (1 + (b ‖x_n − c_c‖² / γ_c)^(1/(q−1)))`.
pub fn update_typicalities(
    features: &FeatureMatrix,
    centers: &Array2<f64>,
    gammas: &[f64],
    params: &PflicmParams,
) -> Array2<f64> {
    typicalities_from_distances(&squared_distances(features, centers), gammas, params)
}

pub(crate) fn typicalities_from_distances(d2: &Array2<f64>, gammas: &[f64], params: &PflicmParams) -> Array2<f64> {
    let exponent = 1.0 / (params.q - 1.0);
    let mut t = d2.clone();
    for (mut row, &gamma) in t.rows_mut().into_iter().zip(gammas) {
        row.mapv_inplace(|d| 1.0 / (1.0 + (params.b * d / gamma).powf(exponent)));
    }
    t
}

/// Weighted means with weights `a u^m + b t^q`. Clusters whose weights are
/// all zero keep their previous center and are reported as stalled.
pub fn update_centers(
    features: &FeatureMatrix,
    u: &Array2<f64>,
    t: &Array2<f64>,
    params: &PflicmParams,
    prev_centers: &Array2<f64>,
) -> (Array2<f64>, Vec<bool>) {
    let d = features.n_dims();
    let mut centers = prev_centers.clone();
    let mut stalled = vec![false; u.nrows()];
    for c in 0..u.nrows() {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for (n, x) in features.rows().enumerate() {
            let w = params.a * u[[c, n]].powf(params.m) + params.b * t[[c, n]].powf(params.q);
            den += w;
            for (acc, xi) in num.iter_mut().zip(x) {
                *acc += w * xi;
            }
        }
        if den > 0.0 {
            for (j, v) in num.iter().enumerate() {
                centers[[c, j]] = v / den;
            }
        } else {
            stalled[c] = true;
        }
    }
    (centers, stalled)
}

/// `γ_c = Σ_n u_cn^m ‖x_n − c_c‖² / Σ_n u_cn^m`, floored at [`GAMMA_FLOOR`].
pub fn update_gammas(
    features: &FeatureMatrix,
    centers: &Array2<f64>,
    u: &Array2<f64>,
    params: &PflicmParams,
) -> Vec<f64> {
    gammas_from_distances(&squared_distances(features, centers), u, params.m)
}

pub(crate) fn gammas_from_distances(d2: &Array2<f64>, u: &Array2<f64>, m: f64) -> Vec<f64> {
    (0..u.nrows())
        .map(|c| {
            let mut num = 0.0;
            let mut den = 0.0;
            for n in 0..u.ncols() {
                let w = u[[c, n]].powf(m);
                num += w * d2[[c, n]];
                den += w;
            }
            let gamma = if den > 0.0 { num / den } else { 0.0 };
            gamma.max(GAMMA_FLOOR)
        })
        .collect()
}

/// The PFLICM objective, split into its membership and typicality parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    /// `Σ a u^m (‖x − c‖² + G)`
    pub membership: f64,
    /// `Σ b t^q ‖x − c‖² + Σ γ (1 − t)^q`
    pub typicality: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.membership + self.typicality
    }
}

pub fn objective_terms(
    features: &FeatureMatrix,
    graph: &NeighborGraph,
    u: &Array2<f64>,
    t: &Array2<f64>,
    centers: &Array2<f64>,
    gammas: &[f64],
    params: &PflicmParams,
) -> ObjectiveTerms {
    let d2 = squared_distances(features, centers);
    let g = fuzzy_factors(u, &d2, graph, params.m);
    let mut membership = 0.0;
    let mut typicality = 0.0;
    for ((c, n), &dist) in d2.indexed_iter() {
        membership += params.a * u[[c, n]].powf(params.m) * (dist + g[[c, n]]);
        typicality += params.b * t[[c, n]].powf(params.q) * dist
            + gammas[c] * (1.0 - t[[c, n]]).powf(params.q);
    }
    ObjectiveTerms {
        membership,
        typicality,
    }
}

pub fn objective(
    features: &FeatureMatrix,
    graph: &NeighborGraph,
    u: &Array2<f64>,
    t: &Array2<f64>,
    centers: &Array2<f64>,
    gammas: &[f64],
    params: &PflicmParams,
) -> f64 {
    objective_terms(features, graph, u, t, centers, gammas, params).total()
}
