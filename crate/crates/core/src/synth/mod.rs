//! Synthetic seafloor-like texture images with exact ground truth.
//!
//! An image is a set of axis-aligned rectangles that tile it, each filled
//! with one texture. Every region draws from its own random stream, so an
//! image is a pure function of its layout, size and seed.

mod blobs;
mod texture;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::FoldPlan;
use crate::io::Image;

pub use blobs::{feature_blobs, lattice_graph};
pub use texture::Texture;

/// A texture together with the class id it is painted with in the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub name: String,
    pub texture: Texture,
    pub class_id: usize,
}

impl TextureSpec {
    pub fn validate(&self) -> Result<()> {
        self.texture.validate()
    }
}

/// The four default textures, in class order ripple, flat, rocky, crater.
pub fn default_specs() -> Vec<TextureSpec> {
    let textures = [
        ("ripple", Texture::default_ripple()),
        ("flat", Texture::default_flat()),
        ("rocky", Texture::default_rocky()),
        ("crater", Texture::default_crater()),
    ];
    textures
        .into_iter()
        .enumerate()
        .map(|(class_id, (name, texture))| TextureSpec {
            name: name.to_string(),
            texture,
            class_id,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rect: Rect,
    pub spec: TextureSpec,
}

/// Regions that must tile the image exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub regions: Vec<Region>,
}

impl Layout {
    pub fn single(spec: TextureSpec, size: (usize, usize)) -> Self {
        Layout {
            regions: vec![Region {
                rect: Rect { row: 0, col: 0, height: size.0, width: size.1 },
                spec,
            }],
        }
    }

    /// Four quadrants filled with `specs[0..4]` in raster order.
    pub fn quadrants(specs: &[TextureSpec], size: (usize, usize)) -> Result<Self> {
        if specs.len() != 4 {
            return Err(Error::InvalidInput(format!("quadrants need 4 specs, got {}", specs.len())));
        }
        let (h2, w2) = (size.0 / 2, size.1 / 2);
        let rects = [
            Rect { row: 0, col: 0, height: h2, width: w2 },
            Rect { row: 0, col: w2, height: h2, width: size.1 - w2 },
            Rect { row: h2, col: 0, height: size.0 - h2, width: w2 },
            Rect { row: h2, col: w2, height: size.0 - h2, width: size.1 - w2 },
        ];
        Ok(Layout {
            regions: rects
                .into_iter()
                .zip(specs)
                .map(|(rect, spec)| Region { rect, spec: spec.clone() })
                .collect(),
        })
    }

    /// Checks bounds and exact tiling; returns the per-pixel region index.
    fn region_index(&self, size: (usize, usize)) -> Result<Array2<usize>> {
        let (h, w) = size;
        if h == 0 || w == 0 {
            return Err(Error::InvalidParam("image size must be positive".into()));
        }
        let mut owner = Array2::from_elem((h, w), usize::MAX);
        for (i, region) in self.regions.iter().enumerate() {
            region.spec.validate()?;
            let r = region.rect;
            if r.height == 0 || r.width == 0 || r.row + r.height > h || r.col + r.width > w {
                return Err(Error::InvalidInput(format!("region {i} {r:?} outside {h}x{w} image")));
            }
            for row in r.row..r.row + r.height {
                for col in r.col..r.col + r.width {
                    let o = &mut owner[[row, col]];
                    if *o != usize::MAX {
                        return Err(Error::InvalidInput(format!(
                            "regions {} and {i} overlap at ({row}, {col})",
                            *o
                        )));
                    }
                    *o = i;
                }
            }
        }
        if let Some(((row, col), _)) = owner.indexed_iter().find(|(_, &o)| o == usize::MAX) {
            return Err(Error::InvalidInput(format!("pixel ({row}, {col}) is not covered by any region")));
        }
        Ok(owner)
    }
}

/// Render a layout. Returns the image (values in [0, 1]) and the class mask.
pub fn generate_image(layout: &Layout, size: (usize, usize), seed: u64) -> Result<(Image, Array2<usize>)> {
    let owner = layout.region_index(size)?;
    let mut image = Array2::zeros(size);
    for (i, region) in layout.regions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let patch = region.spec.texture.render(region.rect, &mut rng);
        let r = region.rect;
        image
            .slice_mut(ndarray::s![r.row..r.row + r.height, r.col..r.col + r.width])
            .assign(&patch);
    }
    let mask = owner.mapv(|o| layout.regions[o].spec.class_id);
    Ok((image, mask))
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub image: Image,
    pub mask: Array2<usize>,
    pub layout: Layout,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub images: Vec<SynthImage>,
    pub class_names: Vec<String>,
    pub folds: FoldPlan,
}

/// Smallest side of a region produced by random layouts.
pub const MIN_REGION_SIDE: usize = 48;

/// Random guillotine layout with 2 to 4 regions. Classes are drawn from
/// `specs` without repetition until all have been used.
pub fn random_layout(specs: &[TextureSpec], size: (usize, usize), rng: &mut ChaCha8Rng) -> Layout {
    let mut rects = vec![Rect { row: 0, col: 0, height: size.0, width: size.1 }];
    let target = rng.random_range(2..=4);
    while rects.len() < target {
        // Split the largest region that can still be split.
        rects.sort_by_key(|r| std::cmp::Reverse(r.area()));
        let Some(pos) = rects
            .iter()
            .position(|r| r.height.max(r.width) >= 2 * MIN_REGION_SIDE)
        else {
            break;
        };
        let r = rects.remove(pos);
        let vertical = if r.width >= 2 * MIN_REGION_SIDE && r.height >= 2 * MIN_REGION_SIDE {
            rng.random_bool(0.5)
        } else {
            r.width >= 2 * MIN_REGION_SIDE
        };
        let side = if vertical { r.width } else { r.height };
        let cut = rng.random_range(MIN_REGION_SIDE..=side - MIN_REGION_SIDE);
        let (a, b) = if vertical {
            (
                Rect { width: cut, ..r },
                Rect { col: r.col + cut, width: r.width - cut, ..r },
            )
        } else {
            (
                Rect { height: cut, ..r },
                Rect { row: r.row + cut, height: r.height - cut, ..r },
            )
        };
        rects.push(a);
        rects.push(b);
    }
    rects.sort_by_key(|r| (r.row, r.col));
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.shuffle(rng);
    Layout {
        regions: rects
            .into_iter()
            .enumerate()
            .map(|(i, rect)| Region {
                rect,
                spec: specs[order[i % order.len()]].clone(),
            })
            .collect(),
    }
}

/// `n_images` random layouts over the textures named in `class_mix` (all
/// defaults when empty). Class ids follow the order of `class_mix`.
pub fn generate_dataset(
    n_images: usize,
    size: (usize, usize),
    class_mix: &[String],
    n_folds: usize,
    seed: u64,
) -> Result<SynthDataset> {
    if n_images < n_folds || n_folds == 0 {
        return Err(Error::InvalidParam(format!(
            "need at least one image per fold ({n_images} images, {n_folds} folds)"
        )));
    }
    let specs = select_specs(class_mix)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(Layout, u64)> = (0..n_images)
        .map(|_| (random_layout(&specs, size, &mut rng), rng.random()))
        .collect();
    use rayon::prelude::*;
    let images = jobs
        .into_par_iter()
        .map(|(layout, img_seed)| {
            let (image, mask) = generate_image(&layout, size, img_seed)?;
            Ok(SynthImage { image, mask, layout, seed: img_seed })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        images,
        class_names: specs.iter().map(|s| s.name.clone()).collect(),
        folds: FoldPlan::even(n_images, n_folds)?,
    })
}

/// Default specs restricted to `names`, renumbered densely.
pub fn select_specs(names: &[String]) -> Result<Vec<TextureSpec>> {
    let defaults = default_specs();
    if names.is_empty() {
        return Ok(defaults);
    }
    let mut out = Vec::with_capacity(names.len());
    for (class_id, name) in names.iter().enumerate() {
        let spec = defaults
            .iter()
            .find(|s| &s.name == name)
            .ok_or_else(|| Error::InvalidParam(format!("unknown texture {name:?}")))?;
        if out.iter().any(|s: &TextureSpec| &s.name == name) {
            return Err(Error::InvalidParam(format!("texture {name:?} listed twice")));
        }
        out.push(TextureSpec { class_id, ..spec.clone() });
    }
    Ok(out)
}
