//! Superpixel maps and per-superpixel feature aggregation.

mod slic;

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use image::{ImageBuffer, Luma};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::FeatureStack;
use crate::types::FeatureMatrix;

pub use slic::{segment_superpixels, DEFAULT_COMPACTNESS, DEFAULT_TARGET_COUNT, SLIC_ITERATIONS};

/// A label image whose ids are dense in `0..n` and each 4-connected.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpixelMap {
    labels: Array2<u32>,
    pixel_counts: Vec<usize>,
    centroids: Vec<(f64, f64)>,
}

/// Metadata returned when loading an external label map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    /// Number of extra ids created by splitting disconnected labels.
    pub split_components: usize,
}

impl SuperpixelMap {
    /// Wrap a label image that already satisfies the invariants.
    pub fn from_dense_labels(labels: Array2<u32>) -> Result<Self> {
        let n = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        if n == 0 {
            return Err(Error::InvalidInput("empty label image".into()));
        }
        let mut pixel_counts = vec![0usize; n];
        let mut sums = vec![(0.0, 0.0); n];
        for ((r, c), &l) in labels.indexed_iter() {
            pixel_counts[l as usize] += 1;
            sums[l as usize].0 += r as f64;
            sums[l as usize].1 += c as f64;
        }
        if let Some(id) = pixel_counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidInput(format!("superpixel id {id} has no pixels")));
        }
        let (_, n_components) = connected_components(&labels);
        if n_components != n {
            return Err(Error::InvalidInput(format!(
                "{n} superpixel ids but {n_components} 4-connected components"
            )));
        }
        let centroids = sums
            .iter()
            .zip(&pixel_counts)
            .map(|(&(sr, sc), &k)| (sr / k as f64, sc / k as f64))
            .collect();
        Ok(SuperpixelMap {
            labels,
            pixel_counts,
            centroids,
        })
    }

    /// Relabel arbitrary nonnegative ids densely, splitting any label that
    /// is not 4-connected. New ids are ordered by (original id, first pixel
    /// in raster order).
    pub fn from_raw_labels(raw: &Array2<i64>) -> Result<(Self, LoadReport)> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("empty label image".into()));
        }
        if raw.iter().any(|&v| v < 0) {
            return Err(Error::InvalidInput("negative superpixel label".into()));
        }
        let distinct: BTreeSet<i64> = raw.iter().copied().collect();
        let (components, n_components) = connected_components(raw);
        // Order components by their original label, then raster position.
        let mut first: Vec<Option<(i64, usize)>> = vec![None; n_components];
        for (pos, (&comp, &orig)) in components.iter().zip(raw.iter()).enumerate() {
            first[comp as usize].get_or_insert((orig, pos));
        }
        let mut order: Vec<usize> = (0..n_components).collect();
        order.sort_by_key(|&c| first[c].expect("every component has a pixel"));
        let mut remap = vec![0u32; n_components];
        for (new_id, &c) in order.iter().enumerate() {
            remap[c] = new_id as u32;
        }
        let labels = components.mapv(|c| remap[c as usize]);
        let map = Self::from_dense_labels(labels)?;
        Ok((
            map,
            LoadReport {
                split_components: n_components - distinct.len(),
            },
        ))
    }

    pub fn labels(&self) -> &Array2<u32> {
        &self.labels
    }

    pub fn n_superpixels(&self) -> usize {
        self.pixel_counts.len()
    }

    pub fn pixel_counts(&self) -> &[usize] {
        &self.pixel_counts
    }

    /// Mean (row, col) of each superpixel.
    pub fn centroids(&self) -> &[(f64, f64)] {
        &self.centroids
    }

    pub fn shape(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Sorted lists of superpixels sharing a 4-connected pixel boundary.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut sets = vec![BTreeSet::new(); self.n_superpixels()];
        let (h, w) = self.labels.dim();
        for r in 0..h {
            for c in 0..w {
                let a = self.labels[[r, c]] as usize;
                let mut link = |b: u32| {
                    let b = b as usize;
                    if a != b {
                        sets[a].insert(b);
                        sets[b].insert(a);
                    }
                };
                if c + 1 < w {
                    link(self.labels[[r, c + 1]]);
                }
                if r + 1 < h {
                    link(self.labels[[r + 1, c]]);
                }
            }
        }
        sets.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Majority value of `mask` within each superpixel; ties go to the
    /// lowest value.
    pub fn majority(&self, mask: &Array2<usize>, n_values: usize) -> Result<Vec<usize>> {
        if mask.dim() != self.shape() {
            return Err(Error::Shape(format!(
                "mask {:?} vs superpixels {:?}",
                mask.dim(),
                self.shape()
            )));
        }
        let mut votes = vec![vec![0usize; n_values]; self.n_superpixels()];
        for (&l, &v) in self.labels.iter().zip(mask.iter()) {
            if v >= n_values {
                return Err(Error::InvalidInput(format!("mask value {v} >= {n_values}")));
            }
            votes[l as usize][v] += 1;
        }
        Ok(votes
            .iter()
            .map(|v| {
                let mut best = 0;
                for (i, &c) in v.iter().enumerate() {
                    if c > v[best] {
                        best = i;
                    }
                }
                best
            })
            .collect())
    }

    /// Broadcast one value per superpixel back to pixels.
    pub fn paint<T: Copy + Default>(&self, values: &[T]) -> Array2<T> {
        self.labels.mapv(|l| values[l as usize])
    }

    /// 16-bit PNG with id = pixel value; requires fewer than 65536 ids.
    pub fn to_png16(&self) -> Result<Vec<u8>> {
        if self.n_superpixels() >= 65536 {
            return Err(Error::InvalidInput(format!(
                "{} superpixels do not fit a 16-bit PNG; use CSV",
                self.n_superpixels()
            )));
        }
        let (h, w) = self.shape();
        let buf: Vec<u16> = self.labels.iter().map(|&l| l as u16).collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(w as u32, h as u32, buf).expect("buffer matches dims");
        crate::io::encode_png(&img)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut out = String::new();
        for row in self.labels.rows() {
            let line: Vec<String> = row.iter().map(u32::to_string).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out.into_bytes()
    }
}

/// Label 4-connected regions of equal value; ids assigned in raster order.
fn connected_components<T: PartialEq + Copy>(img: &Array2<T>) -> (Array2<u32>, usize) {
    let (h, w) = img.dim();
    let mut comp = Array2::from_elem((h, w), u32::MAX);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if comp[[r0, c0]] != u32::MAX {
                continue;
            }
            let v = img[[r0, c0]];
            comp[[r0, c0]] = next;
            queue.push_back((r0, c0));
            while let Some((r, c)) = queue.pop_front() {
                let nbrs = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in nbrs {
                    if nr < h && nc < w && comp[[nr, nc]] == u32::MAX && img[[nr, nc]] == v {
                        comp[[nr, nc]] = next;
                        queue.push_back((nr, nc));
                    }
                }
            }
            next += 1;
        }
    }
    (comp, next as usize)
}

/// Read a label map from a 16-bit PNG or, for `.csv` paths, comma-separated
/// integers; ids are relabeled densely and disconnected labels split.
pub fn load_superpixels(path: &Path, image_shape: (usize, usize)) -> Result<(SuperpixelMap, LoadReport)> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let raw = if is_csv {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_label_csv(&text, path)?
    } else {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let gray = img.to_luma16();
        let (w, h) = gray.dimensions();
        let vals = gray.pixels().map(|p| i64::from(p.0[0])).collect();
        Array2::from_shape_vec((h as usize, w as usize), vals).expect("buffer matches dims")
    };
    if raw.dim() != image_shape {
        return Err(Error::Shape(format!(
            "superpixel map {:?} does not match image {:?}",
            raw.dim(),
            image_shape
        )));
    }
    SuperpixelMap::from_raw_labels(&raw)
}

fn parse_label_csv(text: &str, path: &Path) -> Result<Array2<i64>> {
    let mut rows: Vec<Vec<i64>> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    let w = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::parse(path, "ragged label rows"));
    }
    let h = rows.len();
    Ok(Array2::from_shape_vec((h, w), rows.concat()).expect("rows checked"))
}

/// Mean feature vector of each superpixel.
pub fn aggregate_features(stack: &FeatureStack, sp: &SuperpixelMap) -> Result<FeatureMatrix> {
    if (stack.height(), stack.width()) != sp.shape() {
        return Err(Error::Shape(format!(
            "feature stack {}x{} vs superpixels {:?}",
            stack.height(),
            stack.width(),
            sp.shape()
        )));
    }
    let d = stack.n_planes();
    let mut sums = Array2::<f64>::zeros((sp.n_superpixels(), d));
    for p in 0..d {
        for (&l, &v) in sp.labels().iter().zip(stack.plane(p).iter()) {
            sums[[l as usize, p]] += v;
        }
    }
    for (mut row, &k) in sums.rows_mut().into_iter().zip(sp.pixel_counts()) {
        row /= k as f64;
    }
    FeatureMatrix::new(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn dense_relabeling_keeps_numeric_order() {
        let raw = array![[0i64, 0, 2, 2], [0, 0, 2, 2], [5, 5, 5, 5]];
        let (sp, report) = SuperpixelMap::from_raw_labels(&raw).unwrap();
        assert_eq!(sp.n_superpixels(), 3);
        assert_eq!(report.split_components, 0);
        assert_eq!(sp.labels(), &array![[0u32, 0, 1, 1], [0, 0, 1, 1], [2, 2, 2, 2]]);
    }

    #[test]
    fn disconnected_label_is_split() {
        let raw = array![[1i64, 0, 1], [1, 0, 1]];
        let (sp, report) = SuperpixelMap::from_raw_labels(&raw).unwrap();
        assert_eq!(sp.n_superpixels(), 3);
        assert_eq!(report.split_components, 1);
        assert_eq!(sp.labels(), &array![[1u32, 0, 2], [1, 0, 2]]);
    }

    #[test]
    fn diagonal_touch_is_not_connected() {
        let raw = array![[1i64, 0], [0, 1]];
        let (sp, report) = SuperpixelMap::from_raw_labels(&raw).unwrap();
        assert_eq!(sp.n_superpixels(), 4);
        assert_eq!(report.split_components, 2);
    }

    #[test]
    fn all_zero_labels_give_one_superpixel() {
        let (sp, _) = SuperpixelMap::from_raw_labels(&Array2::zeros((5, 7))).unwrap();
        assert_eq!(sp.n_superpixels(), 1);
        assert_eq!(sp.pixel_counts(), &[35]);
        assert_eq!(sp.centroids()[0], (2.0, 3.0));
    }

    #[test]
    fn negative_labels_are_rejected() {
        assert!(SuperpixelMap::from_raw_labels(&array![[0i64, -1]]).is_err());
    }

    #[test]
    fn dense_constructor_checks_invariants() {
        assert!(SuperpixelMap::from_dense_labels(array![[0u32, 2]]).is_err());
        assert!(SuperpixelMap::from_dense_labels(array![[0u32, 1, 0]]).is_err());
        assert!(SuperpixelMap::from_dense_labels(array![[0u32, 1, 1]]).is_ok());
    }

    #[test]
    fn adjacency_on_2x2_grid_excludes_diagonals() {
        let labels = array![[0u32, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]];
        let sp = SuperpixelMap::from_dense_labels(labels).unwrap();
        assert_eq!(sp.adjacency(), vec![vec![1, 2], vec![0, 3], vec![0, 3], vec![1, 2]]);
    }

    #[test]
    fn majority_ties_go_low() {
        let sp = SuperpixelMap::from_dense_labels(array![[0u32, 0, 1, 1]]).unwrap();
        let mask = array![[2usize, 1, 3, 3]];
        assert_eq!(sp.majority(&mask, 4).unwrap(), vec![1, 3]);
    }

    #[test]
    fn aggregate_single_superpixel_is_global_mean() {
        let planes = Array3::from_shape_fn((2, 3, 3), |(p, r, c)| (p * 9 + r * 3 + c) as f64);
        let stack = FeatureStack::from_planes(planes).unwrap();
        let sp = SuperpixelMap::from_dense_labels(Array2::zeros((3, 3))).unwrap();
        let f = aggregate_features(&stack, &sp).unwrap();
        assert_eq!(f.n_samples(), 1);
        assert!((f.row(0)[0] - 4.0).abs() < 1e-12);
        assert!((f.row(0)[1] - 13.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_single_pixel_superpixel_copies_pixel() {
        let planes = Array3::from_shape_fn((3, 2, 2), |(p, r, c)| (p * 10 + r * 2 + c) as f64 + 0.5);
        let stack = FeatureStack::from_planes(planes).unwrap();
        let sp = SuperpixelMap::from_dense_labels(array![[0u32, 1], [0, 0]]).unwrap();
        let f = aggregate_features(&stack, &sp).unwrap();
        assert_eq!(f.row(1), &[1.5, 11.5, 21.5]);
    }

    #[test]
    fn aggregate_rejects_shape_mismatch() {
        let stack = FeatureStack::from_planes(Array3::zeros((1, 3, 3))).unwrap();
        let sp = SuperpixelMap::from_dense_labels(Array2::zeros((3, 4))).unwrap();
        assert!(aggregate_features(&stack, &sp).is_err());
    }

    #[test]
    fn png16_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels = Array2::from_shape_fn((6, 9), |(r, c)| (r / 3 * 3 + c / 3) as u32);
        let sp = SuperpixelMap::from_dense_labels(labels).unwrap();
        let png = dir.path().join("sp.png");
        std::fs::write(&png, sp.to_png16().unwrap()).unwrap();
        let (back, _) = load_superpixels(&png, (6, 9)).unwrap();
        assert_eq!(back, sp);
        let csv = dir.path().join("sp.csv");
        std::fs::write(&csv, sp.to_csv()).unwrap();
        let (back, _) = load_superpixels(&csv, (6, 9)).unwrap();
        assert_eq!(back, sp);
        assert!(load_superpixels(&csv, (9, 6)).is_err());
    }
}
