//! Grid-seeded local k-means superpixels on a grayscale image.
//!
//! Pixels are clustered in (intensity, row, col) space with
//! `D = (ΔI)² + (compactness / S)² · (Δr² + Δc²)`, where `S` is the seed
//! spacing; each center only competes for pixels within `2S` of it. A final
//! raster-order pass makes every label 4-connected, folding fragments
//! smaller than a quarter cell into the label of the neighbor visited first.

use std::collections::VecDeque;

use ndarray::Array2;

use super::SuperpixelMap;
use crate::error::{Error, Result};
use crate::io::Image;

pub const SLIC_ITERATIONS: usize = 10;
/// Superpixels requested per image when nothing else is configured.
pub const DEFAULT_TARGET_COUNT: usize = 300;
/// Spatial weight used by the shipped pipeline on [0, 1] intensities.
pub const DEFAULT_COMPACTNESS: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
struct Center {
    intensity: f64,
    row: f64,
    col: f64,
}

pub fn segment_superpixels(image: &Image, target_count: usize, compactness: f64) -> Result<SuperpixelMap> {
    let (h, w) = image.dim();
    let n_pixels = h * w;
    if target_count < 1 || target_count > n_pixels {
        return Err(Error::InvalidParam(format!(
            "target_count {target_count} must be in [1, {n_pixels}]"
        )));
    }
    if !(compactness > 0.0 && compactness.is_finite()) {
        return Err(Error::InvalidParam(format!(
            "compactness must be > 0, got {compactness}"
        )));
    }
    crate::types::ensure_finite(image.iter(), "image")?;
    if target_count == 1 {
        return SuperpixelMap::from_dense_labels(Array2::zeros((h, w)));
    }

    let grid_rows = ((target_count as f64 * h as f64 / w as f64).sqrt().round() as usize).clamp(1, h);
    let grid_cols = ((target_count as f64 / grid_rows as f64).round() as usize).clamp(1, w);
    let step = (n_pixels as f64 / (grid_rows * grid_cols) as f64).sqrt();
    let spatial = (compactness / step).powi(2);
    let reach = (2.0 * step).ceil() as isize;

    let mut centers: Vec<Center> = Vec::with_capacity(grid_rows * grid_cols);
    for i in 0..grid_rows {
        for j in 0..grid_cols {
            let row = (i as f64 + 0.5) * h as f64 / grid_rows as f64;
            let col = (j as f64 + 0.5) * w as f64 / grid_cols as f64;
            let (r, c) = ((row as usize).min(h - 1), (col as usize).min(w - 1));
            centers.push(Center {
                intensity: image[[r, c]],
                row,
                col,
            });
        }
    }

    let mut labels = Array2::<u32>::zeros((h, w));
    let mut dist = Array2::<f64>::from_elem((h, w), f64::INFINITY);
    for _ in 0..SLIC_ITERATIONS {
        dist.fill(f64::INFINITY);
        for (k, ctr) in centers.iter().enumerate() {
            let (cr, cc) = (ctr.row.round() as isize, ctr.col.round() as isize);
            let r0 = (cr - reach).max(0) as usize;
            let r1 = ((cr + reach) as usize).min(h - 1);
            let c0 = (cc - reach).max(0) as usize;
            let c1 = ((cc + reach) as usize).min(w - 1);
            for r in r0..=r1 {
                let dr = r as f64 - ctr.row;
                for c in c0..=c1 {
                    let dc = c as f64 - ctr.col;
                    let di = image[[r, c]] - ctr.intensity;
                    let d = di * di + spatial * (dr * dr + dc * dc);
                    if d < dist[[r, c]] {
                        dist[[r, c]] = d;
                        labels[[r, c]] = k as u32;
                    }
                }
            }
        }
        // Pixels outside every search window fall back to the nearest center.
        for ((r, c), l) in labels.indexed_iter_mut() {
            if dist[[r, c]].is_infinite() {
                *l = nearest_center(&centers, r as f64, c as f64) as u32;
            }
        }

        let mut acc = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for ((r, c), &l) in labels.indexed_iter() {
            let a = &mut acc[l as usize];
            a.0 += image[[r, c]];
            a.1 += r as f64;
            a.2 += c as f64;
            a.3 += 1;
        }
        for (ctr, &(si, sr, sc, n)) in centers.iter_mut().zip(&acc) {
            if n > 0 {
                let n = n as f64;
                *ctr = Center {
                    intensity: si / n,
                    row: sr / n,
                    col: sc / n,
                };
            }
        }
    }

    let min_size = ((step * step) / 4.0).floor().max(1.0) as usize;
    SuperpixelMap::from_dense_labels(enforce_connectivity(&labels, min_size))
}

fn nearest_center(centers: &[Center], r: f64, c: f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (k, ctr) in centers.iter().enumerate() {
        let d = (ctr.row - r).powi(2) + (ctr.col - c).powi(2);
        if d < best.1 {
            best = (k, d);
        }
    }
    best.0
}

/// Relabel so every id is one 4-connected component, merging fragments below
/// `min_size` pixels into an already-labeled neighbor.
fn enforce_connectivity(labels: &Array2<u32>, min_size: usize) -> Array2<u32> {
    let (h, w) = labels.dim();
    let mut out = Array2::from_elem((h, w), u32::MAX);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let mut members = Vec::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if out[[r0, c0]] != u32::MAX {
                continue;
            }
            // A label from the row above or the left, which is already final.
            let adjacent = if c0 > 0 {
                Some(out[[r0, c0 - 1]])
            } else if r0 > 0 {
                Some(out[[r0 - 1, c0]])
            } else {
                None
            };
            let orig = labels[[r0, c0]];
            members.clear();
            out[[r0, c0]] = next;
            queue.push_back((r0, c0));
            while let Some((r, c)) = queue.pop_front() {
                members.push((r, c));
                let nbrs = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in nbrs {
                    if nr < h && nc < w && out[[nr, nc]] == u32::MAX && labels[[nr, nc]] == orig {
                        out[[nr, nc]] = next;
                        queue.push_back((nr, nc));
                    }
                }
            }
            match adjacent {
                Some(adj) if members.len() < min_size => {
                    for &(r, c) in &members {
                        out[[r, c]] = adj;
                    }
                }
                _ => next += 1,
            }
        }
    }
    out
}
