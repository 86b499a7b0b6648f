//! Manifests, the per-image work directory layout, and turning images into
//! superpixel samples.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use ndarray::Array2;
use posseg::eval::{FoldPlan, ImageSample};
use posseg::features::extract_with;
use posseg::io::{encode_png, load_gray_image, read_feature_stack, read_features_csv, Image};
use posseg::pflicm::build_neighbor_graph;
use posseg::superpixels::{load_superpixels, segment_superpixels};
use posseg::{aggregate_features, Error, FeatureMatrix, FeatureStack, LabeledDataset, NeighborGraph, Result, SuperpixelMap};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const MANIFEST: &str = "manifest.csv";
pub const CLASSES: &str = "classes.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image: PathBuf,
    pub mask: PathBuf,
    pub fold: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassRow {
    id: usize,
    name: String,
}

/// Images with masks and fold ids. Paths are stored relative to the
/// manifest's directory and resolved on load.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    pub class_names: Vec<String>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            _ => unreachable!(),
        }
    } else {
        Error::Parse { path: path.to_path_buf(), msg: e.to_string() }
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let rows: Vec<ManifestRow> = read_csv::<ManifestRow>(path)?
            .into_iter()
            .map(|r| ManifestRow { image: dir.join(&r.image), mask: dir.join(&r.mask), fold: r.fold })
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidInput(format!("{} lists no images", path.display())));
        }
        let classes_path = dir.join(CLASSES);
        let classes: Vec<ClassRow> = read_csv(&classes_path)?;
        if classes.iter().enumerate().any(|(i, c)| c.id != i) {
            return Err(Error::Parse {
                path: classes_path,
                msg: "class ids must be 0, 1, 2, ... in order".into(),
            });
        }
        for r in &rows {
            for p in [&r.image, &r.mask] {
                if !p.is_file() {
                    return Err(Error::Io {
                        path: p.clone(),
                        source: std::io::Error::new(std::io::ErrorKind::NotFound, "listed in manifest but missing"),
                    });
                }
            }
        }
        let m = Manifest { rows, class_names: classes.into_iter().map(|c| c.name).collect() };
        m.folds()?;
        Ok(m)
    }

    /// Serialized manifest and class table, with the given relative paths.
    pub fn encode(rows: &[ManifestRow], class_names: &[String]) -> Result<(Vec<u8>, Vec<u8>)> {
        let classes: Vec<ClassRow> = class_names
            .iter()
            .enumerate()
            .map(|(id, name)| ClassRow { id, name: name.clone() })
            .collect();
        Ok((to_csv(rows)?, to_csv(&classes)?))
    }

    pub fn folds(&self) -> Result<FoldPlan> {
        let n_folds = self.rows.iter().map(|r| r.fold + 1).max().unwrap_or(0);
        let mut folds = vec![Vec::new(); n_folds];
        for (i, r) in self.rows.iter().enumerate() {
            folds[r.fold].push(i);
        }
        FoldPlan::from_folds(folds)
    }

    /// Image ids for training: every image outside `held_out`, or all images.
    pub fn train_ids(&self, held_out: Option<usize>) -> Result<Vec<usize>> {
        match held_out {
            None => Ok((0..self.rows.len()).collect()),
            Some(f) => {
                let plan = self.folds()?;
                if f >= plan.n_folds() {
                    return Err(Error::InvalidParam(format!("fold {f} but the manifest has {} folds", plan.n_folds())));
                }
                Ok(plan.train_ids(f))
            }
        }
    }

    /// Image ids in fold `fold`, or all images.
    pub fn test_ids(&self, fold: Option<usize>) -> Result<Vec<usize>> {
        match fold {
            None => Ok((0..self.rows.len()).collect()),
            Some(f) => {
                let plan = self.folds()?;
                if f >= plan.n_folds() {
                    return Err(Error::InvalidParam(format!("fold {f} but the manifest has {} folds", plan.n_folds())));
                }
                Ok(plan.test_ids(f).to_vec())
            }
        }
    }

    pub fn stem(&self, id: usize) -> String {
        stem(&self.rows[id].image)
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

/// File names of one image's artifacts inside a work directory.
pub struct WorkFiles {
    pub stack: PathBuf,
    pub superpixels_png: PathBuf,
    pub superpixels_csv: PathBuf,
    pub samples: PathBuf,
}

impl WorkFiles {
    pub fn new(work: &Path, stem: &str) -> Self {
        WorkFiles {
            stack: work.join(format!("{stem}.fstk")),
            superpixels_png: work.join(format!("{stem}_sp.png")),
            superpixels_csv: work.join(format!("{stem}_sp.csv")),
            samples: work.join(format!("{stem}_samples.csv")),
        }
    }

    /// Whichever superpixel map exists, PNG first.
    pub fn superpixels(&self) -> Result<&Path> {
        [&self.superpixels_png, &self.superpixels_csv]
            .into_iter()
            .find(|p| p.is_file())
            .map(PathBuf::as_path)
            .ok_or_else(|| missing(&self.superpixels_png, "run `posseg superpixels` first"))
    }
}

pub fn missing(path: &Path, hint: &str) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, hint.to_string()),
    }
}

/// Class-id mask from an 8-bit PNG whose pixel values are class ids.
pub fn load_mask(path: &Path, n_classes: usize) -> Result<Array2<usize>> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let vals: Vec<usize> = gray.pixels().map(|p| usize::from(p.0[0])).collect();
    if let Some(v) = vals.iter().find(|&&v| v >= n_classes) {
        return Err(Error::InvalidInput(format!("{}: mask value {v} but only {n_classes} classes", path.display())));
    }
    Ok(Array2::from_shape_vec((h as usize, w as usize), vals).expect("buffer matches dims"))
}

pub fn encode_mask(mask: &Array2<usize>) -> Result<Vec<u8>> {
    let (h, w) = mask.dim();
    let buf = mask
        .iter()
        .map(|&v| u8::try_from(v).map_err(|_| Error::InvalidInput(format!("class id {v} does not fit 8 bits"))))
        .collect::<Result<Vec<u8>>>()?;
    encode_png(&ImageBuffer::<Luma<u8>, _>::from_raw(w as u32, h as u32, buf).expect("buffer matches dims"))
}

/// 16-bit PNG of [0, 1] intensities.
pub fn encode_image16(img: &Image) -> Result<Vec<u8>> {
    let (h, w) = img.dim();
    let buf: Vec<u16> = img.iter().map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    encode_png(&ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, buf).expect("buffer matches dims"))
}

/// Superpixel features of one image with everything needed downstream.
pub struct Prepared {
    pub superpixels: SuperpixelMap,
    pub features: FeatureMatrix,
}

/// Features and superpixels computed from the image itself.
pub fn prepare_image(image: &Image, cfg: &PipelineConfig) -> Result<Prepared> {
    let stack = extract_with(image, &cfg.features)?;
    let superpixels = segment_superpixels(image, cfg.superpixels.target_count, cfg.superpixels.compactness)?;
    let features = aggregate_features(&stack, &superpixels)?;
    Ok(Prepared { superpixels, features })
}

/// Superpixel features and map from a work directory.
pub fn load_prepared(files: &WorkFiles, shape: Option<(usize, usize)>) -> Result<(Prepared, Option<Vec<usize>>)> {
    if !files.samples.is_file() {
        return Err(missing(&files.samples, "run `posseg superpixels` with a manifest first"));
    }
    let (features, labels) = read_features_csv(&files.samples)?;
    let sp_path = files.superpixels()?;
    let shape = match shape {
        Some(s) => s,
        None => map_shape(sp_path)?,
    };
    let (superpixels, report) = load_superpixels(sp_path, shape)?;
    if report_changed(&report) || superpixels.n_superpixels() != features.n_samples() {
        return Err(Error::InvalidInput(format!(
            "{} has {} superpixels but {} lists {} samples",
            sp_path.display(),
            superpixels.n_superpixels(),
            files.samples.display(),
            features.n_samples()
        )));
    }
    Ok((Prepared { superpixels, features }, labels))
}

fn report_changed(report: &posseg::superpixels::LoadReport) -> bool {
    report.split_components > 0
}

fn map_shape(path: &Path) -> Result<(usize, usize)> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        Ok((lines.len(), lines.first().map_or(0, |l| l.split(',').count())))
    } else {
        let (w, h) = image::image_dimensions(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
        Ok((h as usize, w as usize))
    }
}

pub fn load_stack(path: &Path) -> Result<FeatureStack> {
    if !path.is_file() {
        return Err(missing(path, "run `posseg features` first"));
    }
    FeatureStack::from_planes(read_feature_stack(path)?)
}

/// Per-image samples for the given manifest ids, read from `work` when
/// given, otherwise computed from the images. Runs images in parallel.
pub fn load_samples(manifest: &Manifest, ids: &[usize], work: Option<&Path>, cfg: &PipelineConfig) -> Result<Vec<ImageSample>> {
    let l = manifest.class_names.len();
    ids.par_iter()
        .map(|&id| {
            let row = &manifest.rows[id];
            let (prepared, truth) = match work {
                Some(work) => {
                    let (p, labels) = load_prepared(&WorkFiles::new(work, &manifest.stem(id)), None)?;
                    let truth = match labels {
                        Some(t) => t,
                        None => p.superpixels.majority(&load_mask(&row.mask, l)?, l)?,
                    };
                    (p, truth)
                }
                None => {
                    let p = prepare_image(&load_gray_image(&row.image)?, cfg)?;
                    let truth = p.superpixels.majority(&load_mask(&row.mask, l)?, l)?;
                    (p, truth)
                }
            };
            if let Some(&bad) = truth.iter().find(|&&t| t >= l) {
                return Err(Error::InvalidInput(format!("label {bad} outside {l} classes for image {id}")));
            }
            Ok(ImageSample {
                graph: build_neighbor_graph(&prepared.superpixels, cfg.pflicm.window_radius),
                features: prepared.features,
                truth,
            })
        })
        .collect()
}

/// Stack several images' samples into one labeled training set and graph.
pub fn training_set(samples: &[ImageSample], class_names: &[String]) -> Result<(LabeledDataset, NeighborGraph)> {
    let features = FeatureMatrix::vstack(samples.iter().map(|s| &s.features))?;
    let labels = samples.iter().flat_map(|s| s.truth.iter().copied()).collect();
    let graph = NeighborGraph::disjoint_union(samples.iter().map(|s| &s.graph));
    Ok((LabeledDataset::new(features, labels, class_names.to_vec())?, graph))
}
