//! Exact k-nearest-neighbor search over a static point set.
//!
//! Nodes split at the median of the dimension with the widest spread and
//! keep a bounding box of their points. A subtree is skipped only when the
//! distance to its box is strictly larger than the current k-th distance, so
//! results, including the order among equal distances, match a linear scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::types::{squared_distance, FeatureMatrix};

pub const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct BoxedNode {
    node: Node,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: FeatureMatrix,
    /// Point indices, grouped so each leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<BoxedNode>,
}

/// A neighbor candidate ordered by distance, then index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn build(points: FeatureMatrix) -> Self {
        let n = points.n_samples();
        let mut tree = KdTree {
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, n);
        tree
    }

    pub fn len(&self) -> usize {
        self.points.n_samples()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_dims(&self) -> usize {
        self.points.n_dims()
    }

    pub fn points(&self) -> &FeatureMatrix {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let d = self.points.n_dims();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for (j, &v) in self.points.row(i).iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(BoxedNode {
            node: Node::Leaf { start, end },
            lo,
            hi,
        });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let b = &self.nodes[id];
        let (dim, spread) = (0..d)
            .map(|j| (j, b.hi[j] - b.lo[j]))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if spread <= 0.0 {
            // All points coincide.
            return id;
        }
        let points = &self.points;
        self.order[start..end].sort_unstable_by(|&a, &b| {
            points.row(a)[dim]
                .total_cmp(&points.row(b)[dim])
                .then(a.cmp(&b))
        });
        let mid = start + (end - start) / 2;
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id].node = Node::Split { left, right };
        id
    }

    /// Lower bound on the distance from `q` to any point inside node `id`.
    /// Per-dimension gaps are summed in dimension order like the point
    /// distance, so rounding can never push the bound above a true distance.
    fn box_distance(&self, id: usize, q: &[f64]) -> f64 {
        let b = &self.nodes[id];
        let mut s = 0.0;
        for ((&x, &lo), &hi) in q.iter().zip(&b.lo).zip(&b.hi) {
            let gap = if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            };
            s += gap * gap;
        }
        s.sqrt()
    }

    /// The `k` nearest points as `(index, distance)`, nearest first; equal
    /// distances are ordered by index.
    pub fn knn(&self, query: &[f64], k: usize) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.n_dims() {
            return Err(Error::Shape(format!(
                "query has {} dims, index has {}",
                query.len(),
                self.n_dims()
            )));
        }
        if k > self.len() {
            return Err(Error::InvalidParam(format!(
                "k = {k} exceeds the {} indexed points",
                self.len()
            )));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        Ok(out.into_iter().map(|c| (c.index, c.dist)).collect())
    }

    fn search(&self, id: usize, q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[id].node {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Candidate {
                        dist: squared_distance(self.points.row(i), q).sqrt(),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("k >= 1") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split { left, right } => {
                let dl = self.box_distance(left, q);
                let dr = self.box_distance(right, q);
                let children = if dl <= dr {
                    [(left, dl), (right, dr)]
                } else {
                    [(right, dr), (left, dl)]
                };
                for (child, bound) in children {
                    if heap.len() == k && bound > heap.peek().expect("k >= 1").dist {
                        continue;
                    }
                    self.search(child, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn brute(points: &FeatureMatrix, q: &[f64], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .rows()
            .enumerate()
            .map(|(i, p)| (i, squared_distance(p, q).sqrt()))
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn query_on_a_point_finds_it_first() {
        let pts = FeatureMatrix::new(Array2::from_shape_fn((40, 3), |(i, j)| (i * 7 + j * 3) as f64 % 11.0)).unwrap();
        let tree = KdTree::build(pts.clone());
        let hit = tree.knn(pts.row(17), 1).unwrap();
        assert_eq!(hit[0].1, 0.0);
        assert_eq!(pts.row(hit[0].0), pts.row(17));
    }

    #[test]
    fn k_equal_n_returns_everything_sorted() {
        let pts = FeatureMatrix::new(Array2::from_shape_fn((50, 2), |(i, j)| ((i * 13 + j * 5) % 17) as f64)).unwrap();
        let tree = KdTree::build(pts.clone());
        let q = [3.3, 8.1];
        assert_eq!(tree.knn(&q, 50).unwrap(), brute(&pts, &q, 50));
    }

    #[test]
    fn too_many_neighbors_is_an_error() {
        let tree = KdTree::build(FeatureMatrix::new(Array2::zeros((3, 2))).unwrap());
        assert!(tree.knn(&[0.0, 0.0], 4).is_err());
        assert!(tree.knn(&[0.0], 1).is_err());
    }

    #[test]
    fn duplicates_are_ordered_by_index() {
        let pts = FeatureMatrix::new(Array2::from_elem((40, 2), 1.0)).unwrap();
        let tree = KdTree::build(pts);
        let got: Vec<usize> = tree.knn(&[0.0, 0.0], 5).unwrap().iter().map(|p| p.0).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_linear_scan(
            n in 1usize..200,
            d in 1usize..6,
            k_frac in 0.0f64..1.0,
            grid in proptest::bool::ANY,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Integer grids produce many exact ties.
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| if grid {
                rng.random_range(0..4) as f64
            } else {
                rng.random_range(-1.0..1.0)
            };
            let pts = FeatureMatrix::new(Array2::from_shape_fn((n, d), |_| draw(&mut rng))).unwrap();
            let tree = KdTree::build(pts.clone());
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            for _ in 0..5 {
                let q: Vec<f64> = (0..d).map(|_| draw(&mut rng)).collect();
                prop_assert_eq!(tree.knn(&q, k).unwrap(), brute(&pts, &q, k));
            }
        }
    }
}
