use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, ValueEnum};
use posseg::superpixels::{DEFAULT_COMPACTNESS, DEFAULT_TARGET_COUNT};
use posseg::{Error, FeatureConfig, LacunarityConfig, PflicmParams, PknnParams, Result};
use serde::{Deserialize, Serialize};

/// Everything a pipeline run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub superpixels: SuperpixelConfig,
    pub pflicm: PflicmParams,
    pub pknn: PknnParams,
    /// Z-score features with training-set statistics.
    pub normalize: bool,
    pub seed: u64,
    pub synth: SynthConfig,
    pub paths: PathConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            features: FeatureConfig::default(),
            superpixels: SuperpixelConfig::default(),
            pflicm: PflicmParams::default(),
            pknn: PknnParams::default(),
            normalize: true,
            seed: DEFAULT_SEED,
            synth: SynthConfig::default(),
            paths: PathConfig::default(),
        }
    }
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuperpixelConfig {
    pub target_count: usize,
    pub compactness: f64,
}

impl Default for SuperpixelConfig {
    fn default() -> Self {
        SuperpixelConfig {
            target_count: DEFAULT_TARGET_COUNT,
            compactness: DEFAULT_COMPACTNESS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_images: usize,
    /// Square image side in pixels.
    pub size: usize,
    /// Texture names in class order; empty means all defaults.
    pub classes: Vec<String>,
    pub folds: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 30,
            size: 256,
            classes: Vec::new(),
            folds: 3,
        }
    }
}

/// Default locations, used when a command's path flags are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub manifest: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.pflicm.validate()?;
        self.pknn.validate()?;
        if self.superpixels.target_count < 1 {
            return Err(Error::InvalidParam("superpixel target_count must be >= 1".into()));
        }
        if !(self.superpixels.compactness > 0.0 && self.superpixels.compactness.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "superpixel compactness must be > 0, got {}",
                self.superpixels.compactness
            )));
        }
        if self.synth.size < 1 || self.synth.folds < 1 || self.synth.n_images < self.synth.folds {
            return Err(Error::InvalidParam(format!(
                "synth needs size >= 1 and n_images >= folds >= 1 (size {}, {} images, {} folds)",
                self.synth.size, self.synth.n_images, self.synth.folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

/// Pipeline settings accepted by every command. A flag given on the command
/// line overrides the config file; otherwise the file (or the shipped
/// default shown here) applies.
#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// JSON pipeline config
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 0 uses every core
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Random seed
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Z-score features with training-set statistics
    #[arg(long, global = true, value_enum, default_value_t = OnOff::On)]
    pub normalize: OnOff,

    /// Sobel orientations
    #[arg(long, global = true, default_value_t = 8)]
    pub orientations: usize,
    /// Sobel mask sizes
    #[arg(long, global = true, value_delimiter = ',', default_value = "5,9,11,15")]
    pub mask_sizes: Vec<usize>,
    /// Lacunarity windows as OUTERxINNER
    #[arg(long, global = true, value_delimiter = ',', default_value = "31x21,21x11", value_parser = parse_window)]
    pub lacunarity: Vec<LacunarityConfig>,

    /// Superpixels requested per image
    #[arg(long, global = true, default_value_t = DEFAULT_TARGET_COUNT)]
    pub target_count: usize,
    /// Superpixel spatial weight
    #[arg(long, global = true, default_value_t = DEFAULT_COMPACTNESS)]
    pub compactness: f64,

    /// PFLICM cluster count
    #[arg(long, global = true, default_value_t = 4)]
    pub clusters: usize,
    /// PFLICM membership weight
    #[arg(long, global = true, default_value_t = 14.0)]
    pub a: f64,
    /// PFLICM typicality weight
    #[arg(long, global = true, default_value_t = 1.4)]
    pub b: f64,
    /// PFLICM membership fuzzifier (> 1)
    #[arg(long, global = true, default_value_t = 1.8)]
    pub m: f64,
    /// PFLICM typicality fuzzifier (> 1)
    #[arg(long, global = true, default_value_t = 2.8)]
    pub q: f64,
    /// PFLICM neighborhood radius in superpixel adjacency hops
    #[arg(long, global = true, default_value_t = 1)]
    pub window_radius: usize,
    /// PFLICM iteration cap
    #[arg(long, global = true, default_value_t = 300)]
    pub max_iters: usize,
    /// PFLICM stopping threshold on the largest membership change
    #[arg(long, global = true, default_value_t = 1e-5)]
    pub tol: f64,

    /// PKNN neighbor count
    #[arg(long, global = true, default_value_t = 6)]
    pub k: usize,
    /// PKNN weight fuzzifier (> 1)
    #[arg(long, global = true, default_value_t = 2.0)]
    pub pknn_m: f64,
    /// PKNN closeness radius
    #[arg(long, global = true, default_value_t = 0.01)]
    pub eta: f64,

    /// Images generated by `synth`
    #[arg(long, global = true, default_value_t = 30)]
    pub n_images: usize,
    /// Side of generated images in pixels
    #[arg(long, global = true, default_value_t = 256)]
    pub size: usize,
    /// Generated texture classes, in class order (default: all)
    #[arg(long, global = true, value_delimiter = ',')]
    pub classes: Vec<String>,
    /// Cross-validation folds
    #[arg(long, global = true, default_value_t = 3)]
    pub folds: usize,
}

fn parse_window(s: &str) -> std::result::Result<LacunarityConfig, String> {
    let (o, i) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected OUTERxINNER, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok(LacunarityConfig::new(parse(o)?, parse(i)?))
}

impl Overrides {
    /// Config file (or defaults) with explicitly given flags applied.
    pub fn resolve(&self, matches: &ArgMatches) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let given = |id: &str| explicit(matches, id);
        macro_rules! set {
            ($id:literal, $field:expr, $value:expr) => {
                if given($id) {
                    $field = $value;
                }
            };
        }
        set!("seed", cfg.seed, self.seed);
        set!("normalize", cfg.normalize, self.normalize == OnOff::On);
        set!("orientations", cfg.features.sobel.orientations, self.orientations);
        set!("mask_sizes", cfg.features.sobel.mask_sizes, self.mask_sizes.clone());
        set!("lacunarity", cfg.features.lacunarity, self.lacunarity.clone());
        set!("target_count", cfg.superpixels.target_count, self.target_count);
        set!("compactness", cfg.superpixels.compactness, self.compactness);
        set!("clusters", cfg.pflicm.n_clusters, self.clusters);
        set!("a", cfg.pflicm.a, self.a);
        set!("b", cfg.pflicm.b, self.b);
        set!("m", cfg.pflicm.m, self.m);
        set!("q", cfg.pflicm.q, self.q);
        set!("window_radius", cfg.pflicm.window_radius, self.window_radius);
        set!("max_iters", cfg.pflicm.max_iters, self.max_iters);
        set!("tol", cfg.pflicm.tol, self.tol);
        set!("k", cfg.pknn.k, self.k);
        set!("pknn_m", cfg.pknn.m, self.pknn_m);
        set!("eta", cfg.pknn.eta, self.eta);
        set!("n_images", cfg.synth.n_images, self.n_images);
        set!("size", cfg.synth.size, self.size);
        set!("classes", cfg.synth.classes, self.classes.clone());
        set!("folds", cfg.synth.folds, self.folds);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Whether `id` was typed on the command line, at the top level or in the
/// chosen subcommand.
fn explicit(matches: &ArgMatches, id: &str) -> bool {
    let here = matches!(matches.value_source(id), Some(ValueSource::CommandLine));
    here || matches.subcommand().is_some_and(|(_, sub)| explicit(sub, id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        assert_eq!(serde_json::from_str::<PipelineConfig>("{}").unwrap(), cfg);
    }

    #[test]
    fn partial_config_keeps_other_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"pknn": {"k": 3}, "normalize": false}"#).unwrap();
        assert_eq!(cfg.pknn.k, 3);
        assert_eq!(cfg.pknn.eta, PknnParams::default().eta);
        assert!(!cfg.normalize);
    }

    #[test]
    fn window_parser() {
        assert_eq!(parse_window("31x21").unwrap(), LacunarityConfig::new(31, 21));
        assert!(parse_window("31").is_err());
    }
}
