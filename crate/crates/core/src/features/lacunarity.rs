//! Gliding-box lacunarity.
//!
//! For each pixel, every `inner × inner` box that fits inside the
//! `outer × outer` window centered on the pixel contributes its intensity
//! sum S. Lacunarity is `var(S) / mean(S)² + 1` with population variance.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_image, reflect_pad};
use crate::error::{Error, Result};
use crate::io::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LacunarityConfig {
    pub outer_window: usize,
    pub inner_box: usize,
}

impl LacunarityConfig {
    pub const fn new(outer_window: usize, inner_box: usize) -> Self {
        LacunarityConfig {
            outer_window,
            inner_box,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (o, i) = (self.outer_window, self.inner_box);
        if o % 2 == 0 || i % 2 == 0 || i == 0 {
            return Err(Error::InvalidParam(format!(
                "lacunarity window sizes must be odd, got [{o}, {i}]"
            )));
        }
        if i >= o {
            return Err(Error::InvalidParam(format!(
                "inner box {i} must be smaller than outer window {o}"
            )));
        }
        Ok(())
    }
}

/// Summed-area table with a zero first row and column.
fn integral(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let mut s = Array2::zeros((h + 1, w + 1));
    for r in 0..h {
        let mut row_sum = 0.0;
        for c in 0..w {
            row_sum += img[[r, c]];
            s[[r + 1, c + 1]] = s[[r, c + 1]] + row_sum;
        }
    }
    s
}

pub fn lacunarity_map(image: &Image, cfg: &LacunarityConfig) -> Result<Image> {
    cfg.validate()?;
    check_image(image, cfg.outer_window, "lacunarity window")?;
    if image.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidInput(
            "lacunarity requires nonnegative intensities".into(),
        ));
    }
    let (h, w) = image.dim();
    let outer = cfg.outer_window;
    let inner = cfg.inner_box;
    let padded = reflect_pad(image, outer / 2);
    let sat = integral(&padded);

    // Sum of every inner box, indexed by its top-left corner in padded coords.
    let (bh, bw) = (padded.nrows() - inner + 1, padded.ncols() - inner + 1);
    let boxes = Array2::from_shape_fn((bh, bw), |(r, c)| {
        sat[[r + inner, c + inner]] - sat[[r, c + inner]] - sat[[r + inner, c]] + sat[[r, c]]
    });

    let span = outer - inner + 1;
    let count = (span * span) as f64;
    let mut out = Array2::zeros((h, w));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(r, mut row)| {
            for (c, o) in row.iter_mut().enumerate() {
                let window = boxes.slice(ndarray::s![r..r + span, c..c + span]);
                let mean = window.sum() / count;
                *o = if mean > 0.0 {
                    let var = window.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / count;
                    var / (mean * mean) + 1.0
                } else {
                    1.0
                };
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(LacunarityConfig::new(31, 21).validate().is_ok());
        assert!(LacunarityConfig::new(21, 31).validate().is_err());
        assert!(LacunarityConfig::new(30, 21).validate().is_err());
        assert!(LacunarityConfig::new(21, 21).validate().is_err());
    }

    #[test]
    fn constant_image_is_one() {
        let img = Array2::from_elem((40, 40), 0.7);
        let lac = lacunarity_map(&img, &LacunarityConfig::new(31, 21)).unwrap();
        assert!(lac.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_image_is_one() {
        let img = Array2::zeros((25, 25));
        let lac = lacunarity_map(&img, &LacunarityConfig::new(21, 11)).unwrap();
        assert!(lac.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn negative_pixels_are_rejected() {
        let mut img = Array2::from_elem((25, 25), 0.5);
        img[[3, 3]] = -0.1;
        assert!(lacunarity_map(&img, &LacunarityConfig::new(21, 11)).is_err());
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = Array2::from_elem((30, 40), 0.5);
        assert!(lacunarity_map(&img, &LacunarityConfig::new(31, 21)).is_err());
    }
}
