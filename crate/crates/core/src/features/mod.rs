//! Per-pixel texture features: an oriented Sobel bank plus gliding-box
//! lacunarity planes.
//!
//! Plane order is fixed: for each mask size (in config order), one plane per
//! orientation (ascending angle), then one plane per lacunarity config. With
//! the defaults that is 4 × 8 Sobel planes followed by 2 lacunarity planes.

mod lacunarity;
mod sobel;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Image;

pub use lacunarity::{lacunarity_map, LacunarityConfig};
pub use sobel::{oriented_kernel, sobel_bank, SobelBankConfig};

/// A d × h × w stack of per-pixel feature planes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    planes: Array3<f64>,
    names: Vec<String>,
}

impl FeatureStack {
    pub fn new(planes: Array3<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != planes.len_of(Axis(0)) {
            return Err(Error::Shape(format!(
                "{} plane names for {} planes",
                names.len(),
                planes.len_of(Axis(0))
            )));
        }
        crate::types::ensure_finite(planes.iter(), "feature stack")?;
        Ok(FeatureStack { planes, names })
    }

    /// Wrap a stack read from a cache file, naming planes `p0..`.
    pub fn from_planes(planes: Array3<f64>) -> Result<Self> {
        let names = (0..planes.len_of(Axis(0))).map(|i| format!("p{i}")).collect();
        Self::new(planes, names)
    }

    pub fn n_planes(&self) -> usize {
        self.planes.len_of(Axis(0))
    }

    pub fn height(&self) -> usize {
        self.planes.len_of(Axis(1))
    }

    pub fn width(&self) -> usize {
        self.planes.len_of(Axis(2))
    }

    pub fn plane(&self, i: usize) -> ArrayView2<'_, f64> {
        self.planes.index_axis(Axis(0), i)
    }

    pub fn planes(&self) -> &Array3<f64> {
        &self.planes
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn concat(parts: Vec<FeatureStack>) -> Result<Self> {
        let views: Vec<_> = parts.iter().map(|p| p.planes.view()).collect();
        let planes = ndarray::concatenate(Axis(0), &views)
            .map_err(|e| Error::Shape(format!("feature planes: {e}")))?;
        let names = parts.into_iter().flat_map(|p| p.names).collect();
        Ok(FeatureStack { planes, names })
    }
}

/// Full configuration of the feature extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub sobel: SobelBankConfig,
    pub lacunarity: Vec<LacunarityConfig>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sobel: SobelBankConfig::default(),
            lacunarity: vec![
                LacunarityConfig::new(31, 21),
                LacunarityConfig::new(21, 11),
            ],
        }
    }
}

impl FeatureConfig {
    pub fn n_features(&self) -> usize {
        self.sobel.orientations * self.sobel.mask_sizes.len() + self.lacunarity.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.sobel.validate()?;
        self.lacunarity.iter().try_for_each(LacunarityConfig::validate)
    }
}

/// Sobel planes followed by lacunarity planes, in config order.
pub fn extract_features(
    image: &Image,
    sobel_cfg: &SobelBankConfig,
    lac_cfgs: &[LacunarityConfig],
) -> Result<FeatureStack> {
    let mut parts = vec![sobel_bank(image, sobel_cfg)?];
    for cfg in lac_cfgs {
        let map = lacunarity_map(image, cfg)?;
        let (h, w) = map.dim();
        parts.push(FeatureStack {
            planes: map.into_shape_with_order((1, h, w)).expect("same length"),
            names: vec![format!("lacunarity_{}_{}", cfg.outer_window, cfg.inner_box)],
        });
    }
    FeatureStack::concat(parts)
}

pub fn extract_with(image: &Image, cfg: &FeatureConfig) -> Result<FeatureStack> {
    extract_features(image, &cfg.sobel, &cfg.lacunarity)
}

/// Reflect-101 index: -1 → 1, n → n − 2. Requires `n > 1` for any
/// out-of-range index and `|overhang| < n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r));
    r as usize
}

/// Pad by `pad` pixels on every side using reflect-101.
pub(crate) fn reflect_pad(image: &Image, pad: usize) -> Array2<f64> {
    let (h, w) = image.dim();
    Array2::from_shape_fn((h + 2 * pad, w + 2 * pad), |(r, c)| {
        let rr = reflect(r as isize - pad as isize, h);
        let cc = reflect(c as isize - pad as isize, w);
        image[[rr, cc]]
    })
}

pub(crate) fn check_image(image: &Image, min_side: usize, what: &str) -> Result<()> {
    let (h, w) = image.dim();
    if h < min_side || w < min_side {
        return Err(Error::InvalidInput(format!(
            "image {h}x{w} is smaller than the {what} ({min_side} px)"
        )));
    }
    crate::types::ensure_finite(image.iter(), "image")
}
