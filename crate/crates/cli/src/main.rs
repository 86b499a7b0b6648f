//! `posseg`: synthetic data, features, superpixels, training, segmentation
//! and evaluation for possibilistic texture segmentation.

mod commands;
mod config;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};
use posseg::{Error, Result};

use commands::{AlgorithmArg, BenchArgs, MapFormat, VaryArg};
use config::{Overrides, PipelineConfig};
use dataset::Manifest;

#[derive(Debug, Parser)]
#[command(name = "posseg", version, about = "Possibilistic texture segmentation pipeline")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate textured images, class masks, a manifest and a class table
    Synth {
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-pixel feature stacks (.fstk) for one image or a whole manifest
    Features {
        #[arg(long, conflicts_with_all = ["manifest", "work"], requires = "out")]
        image: Option<PathBuf>,
        /// Output stack for --image
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Work directory for per-image artifacts
        #[arg(long)]
        work: Option<PathBuf>,
    },
    /// Superpixel maps; with a manifest also per-superpixel feature and label tables
    Superpixels {
        #[arg(long, conflicts_with_all = ["manifest", "work"], requires = "out")]
        image: Option<PathBuf>,
        /// Output map for --image
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        /// Map file format
        #[arg(long, value_enum, default_value_t = MapFormat::Auto)]
        format: MapFormat,
    },
    /// Fit an unlabeled PFLICM model on the training images
    TrainPflicm {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        /// Hold out this fold (default: train on every image)
        #[arg(long)]
        fold: Option<usize>,
        /// Model JSON
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration objective trace CSV
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Give each PFLICM cluster the class it covers most on labeled images
    LabelClusters {
        /// Unlabeled PFLICM model
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        #[arg(long)]
        fold: Option<usize>,
        /// Labeled model JSON
        #[arg(long)]
        out: PathBuf,
        /// Per-cluster class weight CSV
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a possibilistic k-NN model from the training images
    TrainPknn {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class score maps, a crisp label map and a label table per image
    Segment {
        /// Labeled PFLICM or PKNN model
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with_all = ["manifest", "work", "fold"])]
        image: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        work: Option<PathBuf>,
        /// Only segment this fold's images
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cross-validate over the manifest folds and write confusion matrices
    Evaluate {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Reuse work-directory artifacts instead of recomputing them
        #[arg(long)]
        work: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Both)]
        algorithm: AlgorithmArg,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train/test wall-clock times on synthetic feature blobs
    Bench {
        #[arg(long, value_enum, default_value_t = AlgorithmArg::Pknn)]
        algorithm: AlgorithmArg,
        /// Which set grows across rows
        #[arg(long, value_enum, default_value_t = VaryArg::Test)]
        vary: VaryArg,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        /// Size of the set that stays fixed
        #[arg(long, default_value_t = 2000)]
        fixed: usize,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = 34)]
        dims: usize,
        #[arg(long, default_value_t = 4)]
        n_classes: usize,
        /// Timing CSV
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Image { .. } => 3,
        Error::Csv(c) if c.is_io_error() => 3,
        Error::NonFinite { .. } => 4,
        _ => 2,
    }
}

fn run(cli: Cli, cfg: PipelineConfig) -> Result<()> {
    use commands as c;
    let load = |flag: &Option<PathBuf>| -> Result<Manifest> { Manifest::load(c::manifest_path(flag.as_deref(), &cfg)?) };
    match &cli.command {
        Command::Synth { out } => c::synth(&cfg, out),
        Command::Features { image: Some(image), out: Some(out), .. } => c::features_single(&cfg, image, out),
        Command::Features { manifest, work, .. } => {
            c::features_manifest(&cfg, &load(manifest)?, c::work_path(work.as_deref(), &cfg)?)
        }
        Command::Superpixels { image: Some(image), out: Some(out), format, .. } => {
            c::superpixels_single(&cfg, image, out, *format)
        }
        Command::Superpixels { manifest, work, format, .. } => {
            c::superpixels_manifest(&cfg, &load(manifest)?, c::work_path(work.as_deref(), &cfg)?, *format)
        }
        Command::TrainPflicm { manifest, work, fold, out, trace } => c::train_pflicm(
            &cfg,
            &load(manifest)?,
            c::work_path(work.as_deref(), &cfg)?,
            *fold,
            out,
            trace.as_deref(),
        ),
        Command::LabelClusters { model, manifest, work, fold, out, report } => c::label_clusters(
            &cfg,
            model,
            &load(manifest)?,
            c::work_path(work.as_deref(), &cfg)?,
            *fold,
            out,
            report.as_deref(),
        ),
        Command::TrainPknn { manifest, work, fold, out } => {
            c::train_pknn(&cfg, &load(manifest)?, c::work_path(work.as_deref(), &cfg)?, *fold, out)
        }
        Command::Segment { model, image: Some(image), out_dir, .. } => c::segment_single(&cfg, model, image, out_dir),
        Command::Segment { model, manifest, work, fold, out_dir, .. } => {
            c::segment_manifest(model, &load(manifest)?, c::work_path(work.as_deref(), &cfg)?, *fold, out_dir)
        }
        Command::Evaluate { manifest, work, algorithm, out_dir } => {
            let work = work.as_deref().or(cfg.paths.work_dir.as_deref());
            c::evaluate(&cfg, &load(manifest)?, work, &algorithm.resolve(&cfg), out_dir)
        }
        Command::Bench { algorithm, vary, sizes, fixed, repetitions, dims, n_classes, out } => {
            let algorithm = match algorithm.resolve(&cfg).as_slice() {
                [one] => *one,
                _ => return Err(Error::InvalidParam("bench times one algorithm at a time".into())),
            };
            c::bench(
                &cfg,
                &BenchArgs {
                    algorithm,
                    vary: *vary,
                    sizes,
                    fixed: *fixed,
                    repetitions: *repetitions,
                    dims: *dims,
                    classes: *n_classes,
                    out,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = cli.overrides.resolve(&matches).and_then(|cfg| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.overrides.jobs)
            .build_global()
            .map_err(|e| Error::InvalidParam(format!("--jobs: {e}")))?;
        run(cli, cfg)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
