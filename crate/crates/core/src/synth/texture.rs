use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Rect;
use crate::error::{Error, Result};

/// Texture generators. Intensities are clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Texture {
    /// Gaussian noise around a constant level.
    Flat { mean: f64, noise: f64 },
    /// Oriented sinusoid plus noise. The angle is the direction of travel of
    /// the wave, counterclockwise from the column axis.
    Ripple {
        wavelength: f64,
        angle_deg: f64,
        amplitude: f64,
        mean: f64,
        noise: f64,
    },
    /// Bright blobs from thresholded smoothed noise; `density` is the
    /// covered area fraction and `blob_scale` the smoothing sigma in pixels.
    Rocky {
        density: f64,
        contrast: f64,
        blob_scale: f64,
        mean: f64,
        noise: f64,
    },
    /// Dark bowls with bright rims on a flat background, one per cell of a
    /// jittered grid with spacing `spacing · radius`.
    Crater {
        radius: f64,
        depth: f64,
        spacing: f64,
        mean: f64,
        noise: f64,
    },
}

impl Texture {
    pub fn default_flat() -> Self {
        Texture::Flat { mean: 0.45, noise: 0.04 }
    }

    pub fn default_ripple() -> Self {
        Texture::Ripple {
            wavelength: 10.0,
            angle_deg: 30.0,
            amplitude: 0.25,
            mean: 0.45,
            noise: 0.04,
        }
    }

    pub fn default_rocky() -> Self {
        Texture::Rocky {
            density: 0.35,
            contrast: 0.55,
            blob_scale: 2.5,
            mean: 0.15,
            noise: 0.04,
        }
    }

    pub fn default_crater() -> Self {
        Texture::Crater {
            radius: 7.0,
            depth: 0.3,
            spacing: 2.6,
            mean: 0.45,
            noise: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("texture {what} must be > 0, got {v}")))
            }
        };
        let nonneg = |v: f64, what: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParam(format!("texture {what} must be >= 0, got {v}")))
            }
        };
        match *self {
            Texture::Flat { mean, noise } => {
                nonneg(mean, "mean")?;
                nonneg(noise, "noise")
            }
            Texture::Ripple { wavelength, angle_deg, amplitude, mean, noise } => {
                positive(wavelength, "wavelength")?;
                if !angle_deg.is_finite() {
                    return Err(Error::InvalidParam("ripple angle must be finite".into()));
                }
                positive(amplitude, "amplitude")?;
                nonneg(mean, "mean")?;
                nonneg(noise, "noise")
            }
            Texture::Rocky { density, contrast, blob_scale, mean, noise } => {
                if !(density > 0.0 && density < 1.0) {
                    return Err(Error::InvalidParam(format!("rocky density must be in (0, 1), got {density}")));
                }
                positive(contrast, "contrast")?;
                positive(blob_scale, "blob scale")?;
                nonneg(mean, "mean")?;
                nonneg(noise, "noise")
            }
            Texture::Crater { radius, depth, spacing, mean, noise } => {
                positive(radius, "radius")?;
                positive(depth, "depth")?;
                positive(spacing, "spacing")?;
                nonneg(mean, "mean")?;
                nonneg(noise, "noise")
            }
        }
    }

    /// Fill `rect`. Ripple phase uses image coordinates so adjacent regions
    /// with the same texture line up.
    pub(super) fn render(&self, rect: Rect, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let (h, w) = (rect.height, rect.width);
        let mut out = match *self {
            Texture::Flat { mean, .. } => Array2::from_elem((h, w), mean),
            Texture::Ripple { wavelength, angle_deg, amplitude, mean, .. } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                let phase = rng.random_range(0.0..2.0 * PI);
                Array2::from_shape_fn((h, w), |(i, j)| {
                    let (y, x) = ((rect.row + i) as f64, (rect.col + j) as f64);
                    // Rows grow downward, so a counterclockwise angle
                    // subtracts the row term.
                    mean + amplitude * (2.0 * PI * (x * c - y * s) / wavelength + phase).sin()
                })
            }
            Texture::Rocky { density, contrast, blob_scale, mean, .. } => {
                let field = smoothed_noise(h, w, blob_scale, rng);
                let mut sorted: Vec<f64> = field.iter().copied().collect();
                sorted.sort_by(f64::total_cmp);
                let cut = sorted[((1.0 - density) * (sorted.len() - 1) as f64).round() as usize];
                field.mapv(|v| if v > cut { mean + contrast } else { mean })
            }
            Texture::Crater { radius, depth, spacing, mean, .. } => {
                let mut img = Array2::from_elem((h, w), mean);
                let step = spacing * radius;
                let reach = (radius + 4.0).ceil() as isize;
                let rows = (h as f64 / step).ceil() as usize;
                let cols = (w as f64 / step).ceil() as usize;
                for gi in 0..rows {
                    for gj in 0..cols {
                        let jitter = 0.25 * step;
                        let cy = (gi as f64 + 0.5) * step + rng.random_range(-jitter..jitter);
                        let cx = (gj as f64 + 0.5) * step + rng.random_range(-jitter..jitter);
                        let (iy, ix) = (cy.round() as isize, cx.round() as isize);
                        for y in (iy - reach).max(0)..(iy + reach + 1).min(h as isize) {
                            for x in (ix - reach).max(0)..(ix + reach + 1).min(w as isize) {
                                let rho = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
                                img[[y as usize, x as usize]] += crater_profile(rho, radius, depth);
                            }
                        }
                    }
                }
                img
            }
        };
        let noise = match *self {
            Texture::Flat { noise, .. }
            | Texture::Ripple { noise, .. }
            | Texture::Rocky { noise, .. }
            | Texture::Crater { noise, .. } => noise,
        };
        if noise > 0.0 {
            let dist = Normal::new(0.0, noise).expect("validated noise");
            out.mapv_inplace(|v| v + dist.sample(rng));
        }
        out.mapv_inplace(|v| v.clamp(0.0, 1.0));
        out
    }
}

/// Bowl of the given depth inside `radius` and a bright rim just outside.
fn crater_profile(rho: f64, radius: f64, depth: f64) -> f64 {
    let bowl = if rho < radius {
        -depth * (1.0 - (rho / radius).powi(2))
    } else {
        0.0
    };
    let rim = 0.5 * depth * (-((rho - radius) / 1.5).powi(2)).exp();
    bowl + rim
}

/// White noise blurred by a separable Gaussian with reflected borders.
fn smoothed_noise(h: usize, w: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let noise = Array2::from_shape_fn((h, w), |_| StandardNormal.sample(rng));
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let blur = |src: &Array2<f64>, along_rows: bool| {
        let (h, w) = src.dim();
        Array2::from_shape_fn((h, w), |(i, j)| {
            kernel
                .iter()
                .enumerate()
                .map(|(t, k)| {
                    let off = t as isize - radius;
                    if along_rows {
                        k * src[[crate::features::reflect(i as isize + off, h), j]]
                    } else {
                        k * src[[i, crate::features::reflect(j as isize + off, w)]]
                    }
                })
                .sum()
        })
    };
    blur(&blur(&noise, true), false)
}
