//! Oriented extended-Sobel filter bank.
//!
//! A size-`s` base kernel is the outer product of a binomial smoothing
//! vector (across rows) and a binomial-smoothed central difference (along
//! columns), normalized so a unit-slope intensity ramp along the columns
//! gives a response of exactly 1. Other orientations are obtained by
//! resampling the base kernel bilinearly on a rotated grid. Angles are
//! measured from the +column axis toward the +row axis.
//!
//! Each plane holds the half-wave rectified response `max(0, r)`, so the
//! plane for angle θ + 180° carries the negative lobe of θ. All planes are
//! nonnegative and opposite directions stay distinguishable.

use ndarray::{Array2, Array3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_image, reflect_pad, FeatureStack};
use crate::error::{Error, Result};
use crate::io::Image;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SobelBankConfig {
    pub orientations: usize,
    pub mask_sizes: Vec<usize>,
}

impl Default for SobelBankConfig {
    fn default() -> Self {
        SobelBankConfig {
            orientations: 8,
            mask_sizes: vec![5, 9, 11, 15],
        }
    }
}

impl SobelBankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.orientations < 2 {
            return Err(Error::InvalidParam(format!(
                "need at least 2 orientations, got {}",
                self.orientations
            )));
        }
        if let Some(&s) = self.mask_sizes.iter().find(|&&s| s < 3 || s % 2 == 0) {
            return Err(Error::InvalidParam(format!(
                "Sobel mask size {s} must be odd and >= 3"
            )));
        }
        Ok(())
    }

    pub fn angles_deg(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|i| 360.0 * i as f64 / self.orientations as f64)
            .collect()
    }

    fn max_size(&self) -> usize {
        self.mask_sizes.iter().copied().max().unwrap_or(0)
    }
}

fn binomial_row(len: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 1..len {
        let mut next = vec![1.0; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

fn base_kernel(size: usize) -> Array2<f64> {
    let smooth = binomial_row(size);
    let total: f64 = smooth.iter().sum();
    let smooth: Vec<f64> = smooth.iter().map(|v| v / total).collect();

    let inner = binomial_row(size - 2);
    let mut deriv = vec![0.0; size];
    for (i, &b) in inner.iter().enumerate() {
        deriv[i] -= b;
        deriv[i + 2] += b;
    }
    let half = (size / 2) as f64;
    let slope: f64 = deriv
        .iter()
        .enumerate()
        .map(|(i, d)| d * (i as f64 - half))
        .sum();
    Array2::from_shape_fn((size, size), |(r, c)| smooth[r] * deriv[c] / slope)
}

/// cos/sin of an angle in degrees, exact at multiples of 90°.
fn cos_sin_deg(deg: f64) -> (f64, f64) {
    let k = deg / 90.0;
    if k.fract() == 0.0 {
        match (k as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = deg.to_radians();
        (r.cos(), r.sin())
    }
}

fn bilinear(k: &Array2<f64>, y: f64, x: f64) -> f64 {
    let n = k.nrows() as isize;
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let at = |r: isize, c: isize| {
        if (0..n).contains(&r) && (0..n).contains(&c) {
            k[[r as usize, c as usize]]
        } else {
            0.0
        }
    };
    let (r, c) = (y0 as isize, x0 as isize);
    (1.0 - fy) * ((1.0 - fx) * at(r, c) + fx * at(r, c + 1))
        + fy * ((1.0 - fx) * at(r + 1, c) + fx * at(r + 1, c + 1))
}

/// The size-`size` kernel rotated to `angle_deg`.
pub fn oriented_kernel(size: usize, angle_deg: f64) -> Array2<f64> {
    let base = base_kernel(size);
    let (cos, sin) = cos_sin_deg(angle_deg);
    let h = (size / 2) as f64;
    Array2::from_shape_fn((size, size), |(r, c)| {
        let (dy, dx) = (r as f64 - h, c as f64 - h);
        // Rotate the sampling point back by the kernel angle.
        let sx = cos * dx + sin * dy;
        let sy = -sin * dx + cos * dy;
        bilinear(&base, h + sy, h + sx)
    })
}

/// Signed correlation of `padded` with `kernel`, producing an `h × w` image.
fn correlate(padded: &Array2<f64>, pad: usize, kernel: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    let half = kernel.nrows() / 2;
    let off = pad - half;
    let taps: Vec<(usize, usize, f64)> = kernel
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|((r, c), &v)| (r + off, c + off, v))
        .collect();
    let mut out = Array2::zeros((h, w));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for (c, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(kr, kc, v) in &taps {
                    acc += v * padded[[r + kr, c + kc]];
                }
                *o = acc;
            }
        });
    out
}

/// One rectified response plane per (mask size, orientation) pair.
pub fn sobel_bank(image: &Image, cfg: &SobelBankConfig) -> Result<FeatureStack> {
    cfg.validate()?;
    let max_size = cfg.max_size();
    check_image(image, max_size, "largest Sobel mask")?;
    let (h, w) = image.dim();
    let pad = max_size / 2;
    let padded = reflect_pad(image, pad);
    let angles = cfg.angles_deg();
    let n_or = cfg.orientations;
    // With an even orientation count, θ + 180° is the negated kernel of θ.
    let distinct = if n_or.is_multiple_of(2) { n_or / 2 } else { n_or };

    let mut planes = Array3::zeros((n_or * cfg.mask_sizes.len(), h, w));
    let mut names = Vec::with_capacity(planes.len_of(Axis(0)));
    for (si, &size) in cfg.mask_sizes.iter().enumerate() {
        let base = si * n_or;
        for (oi, &angle) in angles.iter().enumerate().take(distinct) {
            let resp = correlate(&padded, pad, &oriented_kernel(size, angle), h, w);
            planes
                .index_axis_mut(Axis(0), base + oi)
                .assign(&resp.mapv(|v| v.max(0.0)));
            if distinct < n_or {
                planes
                    .index_axis_mut(Axis(0), base + oi + distinct)
                    .assign(&resp.mapv(|v| (-v).max(0.0)));
            }
        }
        names.extend(angles.iter().map(|a| format!("sobel_s{size}_a{a}")));
    }
    FeatureStack::new(planes, names)
}
