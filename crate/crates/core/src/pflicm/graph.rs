use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::superpixels::SuperpixelMap;

/// Spatial neighborhoods between samples, with the distance used to weight
/// each neighbor's contribution to the fuzzy factor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeighborGraph {
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// A graph over `n` samples with no edges.
    pub fn empty(n: usize) -> Self {
        NeighborGraph {
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Build from undirected edges `(a, b, distance)`; each edge is stored in
    /// both directions.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(a, b, d) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) outside {n} samples")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("self edge on sample {a}")));
            }
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::InvalidInput(format!("edge distance {d} must be finite and >= 0")));
            }
            g.neighbors[a].push((b, d));
            g.neighbors[b].push((a, d));
        }
        for list in &mut g.neighbors {
            list.sort_by_key(|&(k, _)| k);
            list.dedup_by_key(|&mut (k, _)| k);
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// `(neighbor index, spatial distance)` pairs, sorted by index.
    pub fn neighbors(&self, n: usize) -> &[(usize, f64)] {
        &self.neighbors[n]
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Place several graphs side by side, offsetting indices.
    pub fn disjoint_union<'a>(graphs: impl IntoIterator<Item = &'a NeighborGraph>) -> Self {
        let mut neighbors = Vec::new();
        for g in graphs {
            let offset = neighbors.len();
            neighbors.extend(
                g.neighbors
                    .iter()
                    .map(|l| l.iter().map(|&(k, d)| (k + offset, d)).collect()),
            );
        }
        NeighborGraph { neighbors }
    }
}

/// Superpixels within `radius` adjacency hops of each other are neighbors;
/// the distance is between their pixel centroids.
pub fn build_neighbor_graph(sp: &SuperpixelMap, radius: usize) -> NeighborGraph {
    let adj = sp.adjacency();
    let cents = sp.centroids();
    let n = sp.n_superpixels();
    let mut neighbors = Vec::with_capacity(n);
    let mut hops = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for start in 0..n {
        let mut found = Vec::new();
        hops[start] = 0;
        queue.push_back(start);
        let mut touched = vec![start];
        while let Some(v) = queue.pop_front() {
            if hops[v] == radius {
                continue;
            }
            for &u in &adj[v] {
                if hops[u] == usize::MAX {
                    hops[u] = hops[v] + 1;
                    touched.push(u);
                    found.push(u);
                    queue.push_back(u);
                }
            }
        }
        for &t in &touched {
            hops[t] = usize::MAX;
        }
        found.sort_unstable();
        let (r0, c0) = cents[start];
        neighbors.push(
            found
                .into_iter()
                .map(|k| {
                    let (r1, c1) = cents[k];
                    (k, ((r0 - r1).powi(2) + (c0 - c1).powi(2)).sqrt())
                })
                .collect(),
        );
    }
    NeighborGraph { neighbors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn grid2x2() -> SuperpixelMap {
        let labels = array![[0u32, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]];
        SuperpixelMap::from_dense_labels(labels).unwrap()
    }

    #[test]
    fn grid_neighbors_are_edge_adjacent_only() {
        let g = build_neighbor_graph(&grid2x2(), 1);
        for n in 0..4 {
            assert_eq!(g.neighbors(n).len(), 2);
        }
        let ids: Vec<usize> = g.neighbors(0).iter().map(|p| p.0).collect();
        assert_eq!(ids, vec![1, 2]);
        // Centroids (0.5, 0.5) and (0.5, 2.5).
        assert!((g.neighbors(0)[0].1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn radius_two_reaches_diagonal() {
        let g = build_neighbor_graph(&grid2x2(), 2);
        assert_eq!(g.neighbors(0).len(), 3);
        assert!((g.neighbors(0)[2].1 - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_superpixel_has_no_neighbors() {
        let sp = SuperpixelMap::from_dense_labels(Array2::zeros((4, 4))).unwrap();
        let g = build_neighbor_graph(&sp, 1);
        assert_eq!(g.len(), 1);
        assert!(g.neighbors(0).is_empty());
    }

    #[test]
    fn from_edges_validates() {
        assert!(NeighborGraph::from_edges(2, &[(0, 0, 1.0)]).is_err());
        assert!(NeighborGraph::from_edges(2, &[(0, 2, 1.0)]).is_err());
        let g = NeighborGraph::from_edges(3, &[(0, 1, 1.5), (1, 0, 1.5)]).unwrap();
        assert_eq!(g.neighbors(1), &[(0, 1.5)]);
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn disjoint_union_offsets() {
        let a = NeighborGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let u = NeighborGraph::disjoint_union([&a, &a]);
        assert_eq!(u.len(), 4);
        assert_eq!(u.neighbors(2), &[(3, 1.0)]);
    }
}
