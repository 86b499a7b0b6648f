use std::path::{Path, PathBuf};

use ndarray::Array2;
use posseg::eval::{
    crisp_labels_pflicm, crisp_labels_pknn, run_cross_validation, timing_benchmark, Algorithm, ConfusionMatrix,
    CvOptions, TimingRow, TimingSpec, Vary,
};
use posseg::features::extract_with;
use posseg::io::{encode_feature_stack, encode_png, load_gray_image, to_gray8, write_atomic};
use posseg::model_io::load_pflicm;
use posseg::pflicm::{self, build_neighbor_graph};
use posseg::superpixels::segment_superpixels;
use posseg::synth::generate_dataset;
use posseg::{aggregate_features, pknn, save_model, Error, LabeledDataset, Model, Result, SuperpixelMap, ZScore};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::dataset::{
    encode_image16, encode_mask, load_mask, load_prepared, load_samples, load_stack, prepare_image, stem, to_csv,
    training_set, Manifest, ManifestRow, Prepared, WorkFiles, CLASSES, MANIFEST,
};

/// Files produced by a command, written only after everything succeeded.
#[derive(Default)]
pub struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.0.push((path.into(), bytes));
    }

    pub fn write(self) -> Result<()> {
        for (path, bytes) in self.0 {
            create_parent(&path)?;
            write_atomic(&path, &bytes)?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })
        }
        _ => Ok(()),
    }
}

fn write_one(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    write_atomic(path, bytes)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn required<'a>(flag: Option<&'a Path>, fallback: Option<&'a PathBuf>, what: &str) -> Result<&'a Path> {
    flag.or(fallback.map(PathBuf::as_path))
        .ok_or_else(|| Error::InvalidParam(format!("no {what} given on the command line or in the config")))
}

pub fn manifest_path<'a>(flag: Option<&'a Path>, cfg: &'a PipelineConfig) -> Result<&'a Path> {
    required(flag, cfg.paths.manifest.as_ref(), "--manifest")
}

pub fn work_path<'a>(flag: Option<&'a Path>, cfg: &'a PipelineConfig) -> Result<&'a Path> {
    required(flag, cfg.paths.work_dir.as_ref(), "--work")
}

pub fn synth(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let s = &cfg.synth;
    let ds = generate_dataset(s.n_images, (s.size, s.size), &s.classes, s.folds, cfg.seed)?;
    let mut out = Outputs::default();
    let mut rows = Vec::with_capacity(ds.images.len());
    for (i, img) in ds.images.iter().enumerate() {
        let image = PathBuf::from(format!("img_{i:03}.png"));
        let mask = PathBuf::from(format!("img_{i:03}_mask.png"));
        out.add(out_dir.join(&image), encode_image16(&img.image)?);
        out.add(out_dir.join(&mask), encode_mask(&img.mask)?);
        rows.push(ManifestRow { image, mask, fold: ds.folds.fold_of(i).expect("plan covers every image") });
    }
    let (manifest, classes) = Manifest::encode(&rows, &ds.class_names)?;
    out.add(out_dir.join(MANIFEST), manifest);
    out.add(out_dir.join(CLASSES), classes);
    out.write()?;
    println!("generated {} images in {}", rows.len(), out_dir.display());
    Ok(())
}

pub fn features_single(cfg: &PipelineConfig, image: &Path, out: &Path) -> Result<()> {
    let stack = extract_with(&load_gray_image(image)?, &cfg.features)?;
    write_one(out, &encode_feature_stack(stack.planes()))
}

pub fn features_manifest(cfg: &PipelineConfig, manifest: &Manifest, work: &Path) -> Result<()> {
    (0..manifest.rows.len()).into_par_iter().try_for_each(|id| {
        let stack = extract_with(&load_gray_image(&manifest.rows[id].image)?, &cfg.features)?;
        write_one(&WorkFiles::new(work, &manifest.stem(id)).stack, &encode_feature_stack(stack.planes()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MapFormat {
    /// 16-bit PNG while ids fit, CSV otherwise
    Auto,
    Png,
    Csv,
}

fn encode_map(sp: &SuperpixelMap, format: MapFormat) -> Result<(Vec<u8>, bool)> {
    match format {
        MapFormat::Csv => Ok((sp.to_csv(), true)),
        MapFormat::Png => Ok((sp.to_png16()?, false)),
        MapFormat::Auto if sp.n_superpixels() < 65536 => Ok((sp.to_png16()?, false)),
        MapFormat::Auto => Ok((sp.to_csv(), true)),
    }
}

pub fn superpixels_single(cfg: &PipelineConfig, image: &Path, out: &Path, format: MapFormat) -> Result<()> {
    let sp = segment_superpixels(&load_gray_image(image)?, cfg.superpixels.target_count, cfg.superpixels.compactness)?;
    let (bytes, _) = encode_map(&sp, format)?;
    write_one(out, &bytes)?;
    println!("{} superpixels", sp.n_superpixels());
    Ok(())
}

/// Superpixel maps plus per-superpixel feature/label CSVs for every image.
/// Needs the feature stacks written by `features`.
pub fn superpixels_manifest(cfg: &PipelineConfig, manifest: &Manifest, work: &Path, format: MapFormat) -> Result<()> {
    let l = manifest.class_names.len();
    (0..manifest.rows.len()).into_par_iter().try_for_each(|id| {
        let row = &manifest.rows[id];
        let files = WorkFiles::new(work, &manifest.stem(id));
        let stack = load_stack(&files.stack)?;
        let image = load_gray_image(&row.image)?;
        let sp = segment_superpixels(&image, cfg.superpixels.target_count, cfg.superpixels.compactness)?;
        let features = aggregate_features(&stack, &sp)?;
        let truth = sp.majority(&load_mask(&row.mask, l)?, l)?;
        let (map, is_csv) = encode_map(&sp, format)?;
        let (keep, stale) = if is_csv {
            (&files.superpixels_csv, &files.superpixels_png)
        } else {
            (&files.superpixels_png, &files.superpixels_csv)
        };
        let samples = posseg::io::features_to_csv(&features, Some(&truth))?;
        write_one(keep, &map)?;
        if stale.is_file() {
            std::fs::remove_file(stale).map_err(|source| Error::Io { path: stale.clone(), source })?;
        }
        write_one(&files.samples, &samples)
    })
}

fn normalized(train: &LabeledDataset, cfg: &PipelineConfig) -> Result<(LabeledDataset, Option<ZScore>)> {
    if !cfg.normalize {
        return Ok((train.clone(), None));
    }
    let z = ZScore::fit(train.features());
    let data = LabeledDataset::new(z.apply(train.features())?, train.labels().to_vec(), train.class_names().to_vec())?;
    Ok((data, Some(z)))
}

pub fn train_pflicm(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    work: &Path,
    held_out: Option<usize>,
    out: &Path,
    trace: Option<&Path>,
) -> Result<()> {
    let samples = load_samples(manifest, &manifest.train_ids(held_out)?, Some(work), cfg)?;
    let (train, graph) = training_set(&samples, &manifest.class_names)?;
    let (train, normalizer) = normalized(&train, cfg)?;
    let fit = pflicm::fit(train.features(), &graph, &cfg.pflicm, cfg.seed)?;
    if !fit.converged {
        log::warn!("PFLICM reached max_iters = {} without converging", cfg.pflicm.max_iters);
    }
    if !fit.stalled_clusters.is_empty() {
        log::warn!("clusters {:?} had zero total weight during fitting", fit.stalled_clusters);
    }
    let mut model = fit.model;
    model.normalizer = normalizer;
    let mut outputs = Outputs::default();
    outputs.add(out, posseg::model_io::model_to_json(&Model::Pflicm(model))?.into_bytes());
    if let Some(path) = trace {
        outputs.add(path, to_csv(&fit.trace)?);
    }
    outputs.write()?;
    println!("{} iterations, converged: {}", fit.trace.len(), fit.converged);
    Ok(())
}

pub fn label_clusters(
    cfg: &PipelineConfig,
    model_path: &Path,
    manifest: &Manifest,
    work: &Path,
    held_out: Option<usize>,
    out: &Path,
    report: Option<&Path>,
) -> Result<()> {
    let model = load_pflicm(model_path)?;
    // Neighborhoods must match the ones the model was trained with.
    let mut cfg = cfg.clone();
    cfg.pflicm.window_radius = model.params.window_radius;
    let samples = load_samples(manifest, &manifest.train_ids(held_out)?, Some(work), &cfg)?;
    let (train, graph) = training_set(&samples, &manifest.class_names)?;
    let train = LabeledDataset::new(model.prepare(train.features())?, train.labels().to_vec(), train.class_names().to_vec())?;
    let assignments = model.assign(train.features(), &graph)?;
    let (labeled, rep) = pflicm::label_clusters(&model, &train, &assignments)?;
    if !rep.fallback_clusters.is_empty() {
        log::warn!("clusters {:?} carry no weight; given the majority class", rep.fallback_clusters);
    }
    let labels = labeled.labels()?;
    let mut outputs = Outputs::default();
    outputs.add(out, posseg::model_io::model_to_json(&Model::Pflicm(labeled.clone()))?.into_bytes());
    if let Some(path) = report {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["cluster".to_string(), "class".to_string()];
        header.extend(manifest.class_names.iter().map(|c| format!("weight_{c}")));
        header.push("fallback".into());
        w.write_record(&header)?;
        for (c, row) in rep.weights.rows().into_iter().enumerate() {
            let mut rec = vec![c.to_string(), labels.class_names[labels.classes[c]].clone()];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            rec.push(rep.fallback_clusters.contains(&c).to_string());
            w.write_record(&rec)?;
        }
        outputs.add(path, w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?);
    }
    outputs.write()?;
    for (c, &class) in labels.classes.iter().enumerate() {
        println!("cluster {c} -> {}", labels.class_names[class]);
    }
    Ok(())
}

pub fn train_pknn(cfg: &PipelineConfig, manifest: &Manifest, work: &Path, held_out: Option<usize>, out: &Path) -> Result<()> {
    let samples = load_samples(manifest, &manifest.train_ids(held_out)?, Some(work), cfg)?;
    let (train, _) = training_set(&samples, &manifest.class_names)?;
    let (train, normalizer) = normalized(&train, cfg)?;
    let model = pknn::fit(&train, &cfg.pknn)?.with_normalizer(normalizer)?;
    save_model(&Model::Pknn(model), out)?;
    println!("{} training samples", train.len());
    Ok(())
}

/// Per-class scores (classes × superpixels) and crisp labels.
fn score(model: &Model, prepared: &Prepared) -> Result<(Array2<f64>, Vec<usize>, Vec<String>)> {
    match model {
        Model::Pflicm(m) => {
            let graph = build_neighbor_graph(&prepared.superpixels, m.params.window_radius);
            let maps = m.predict(&m.prepare(&prepared.features)?, &graph)?;
            let crisp = crisp_labels_pflicm(&maps, m)?;
            Ok((m.class_products(&maps)?, crisp, m.labels()?.class_names.clone()))
        }
        Model::Pknn(m) => {
            let conf = m.classify_batch(&m.prepare(&prepared.features)?)?;
            let crisp = crisp_labels_pknn(&conf);
            Ok((conf, crisp, m.class_names().to_vec()))
        }
    }
}

fn segment_outputs(
    outputs: &mut Outputs,
    out_dir: &Path,
    name: &str,
    prepared: &Prepared,
    scores: &Array2<f64>,
    crisp: &[usize],
    class_names: &[String],
) -> Result<()> {
    let sp = &prepared.superpixels;
    for (c, class) in class_names.iter().enumerate() {
        let values: Vec<f64> = scores.row(c).to_vec();
        outputs.add(out_dir.join(format!("{name}_{class}.png")), encode_png(&to_gray8(&sp.paint(&values)))?);
    }
    outputs.add(out_dir.join(format!("{name}_crisp.png")), encode_mask(&sp.paint(crisp))?);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["superpixel".to_string(), "label".to_string()];
    header.extend(class_names.iter().map(|c| format!("score_{c}")));
    w.write_record(&header)?;
    for (i, &label) in crisp.iter().enumerate() {
        let mut rec = vec![i.to_string(), class_names[label].clone()];
        rec.extend(scores.column(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    outputs.add(
        out_dir.join(format!("{name}_labels.csv")),
        w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))?,
    );
    Ok(())
}

pub fn segment_single(cfg: &PipelineConfig, model_path: &Path, image: &Path, out_dir: &Path) -> Result<()> {
    let model = posseg::load_model(model_path)?;
    let prepared = prepare_image(&load_gray_image(image)?, cfg)?;
    let (scores, crisp, names) = score(&model, &prepared)?;
    let mut outputs = Outputs::default();
    segment_outputs(&mut outputs, out_dir, &stem(image), &prepared, &scores, &crisp, &names)?;
    outputs.write()
}

/// Segment the images of one fold (or all) from precomputed work files and
/// tally a confusion matrix against their masks.
pub fn segment_manifest(
    model_path: &Path,
    manifest: &Manifest,
    work: &Path,
    fold: Option<usize>,
    out_dir: &Path,
) -> Result<()> {
    let model = posseg::load_model(model_path)?;
    let ids = manifest.test_ids(fold)?;
    let l = manifest.class_names.len();
    let results = ids
        .par_iter()
        .map(|&id| {
            let files = WorkFiles::new(work, &manifest.stem(id));
            let (prepared, labels) = load_prepared(&files, None)?;
            let truth = match labels {
                Some(t) => t,
                None => prepared.superpixels.majority(&load_mask(&manifest.rows[id].mask, l)?, l)?,
            };
            let (scores, crisp, names) = score(&model, &prepared)?;
            if names != manifest.class_names {
                return Err(Error::InvalidInput(format!(
                    "model classes {names:?} differ from manifest classes {:?}",
                    manifest.class_names
                )));
            }
            let mut outputs = Outputs::default();
            segment_outputs(&mut outputs, out_dir, &manifest.stem(id), &prepared, &scores, &crisp, &names)?;
            Ok((outputs, truth, crisp))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::empty(manifest.class_names.clone())?;
    let mut all = Outputs::default();
    for (outputs, truth, crisp) in results {
        cm.merge(&posseg::eval::confusion(&truth, &crisp, &manifest.class_names)?)?;
        all.0.extend(outputs.0);
    }
    all.add(out_dir.join("confusion.csv"), cm.to_csv()?);
    all.add(out_dir.join("confusion.png"), encode_png(&cm.heatmap(32))?);
    all.write()?;
    println!("segmented {} images, accuracy {:.4}", ids.len(), cm.accuracy());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgorithmArg {
    Pflicm,
    Pknn,
    Both,
}

impl AlgorithmArg {
    pub fn resolve(self, cfg: &PipelineConfig) -> Vec<Algorithm> {
        match self {
            AlgorithmArg::Pflicm => vec![Algorithm::Pflicm(cfg.pflicm)],
            AlgorithmArg::Pknn => vec![Algorithm::Pknn(cfg.pknn)],
            AlgorithmArg::Both => vec![Algorithm::Pflicm(cfg.pflicm), Algorithm::Pknn(cfg.pknn)],
        }
    }
}

#[derive(Serialize)]
struct PredictionRow<'a> {
    image: &'a str,
    superpixel: usize,
    truth: &'a str,
    predicted: &'a str,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    metric: &'a str,
    value: String,
}

/// Cross-validation over the manifest's folds.
pub fn evaluate(
    cfg: &PipelineConfig,
    manifest: &Manifest,
    work: Option<&Path>,
    algorithms: &[Algorithm],
    out_dir: &Path,
) -> Result<()> {
    let plan = manifest.folds()?;
    let ids: Vec<usize> = (0..manifest.rows.len()).collect();
    let samples = load_samples(manifest, &ids, work, cfg)?;
    let names = &manifest.class_names;
    let mut outputs = Outputs::default();
    for &algorithm in algorithms {
        let opts = CvOptions { algorithm, normalize: cfg.normalize, seed: cfg.seed };
        let report = run_cross_validation(&samples, names, &plan, &opts)?;
        let alg = algorithm.name();
        let pooled = report.pooled();
        outputs.add(out_dir.join(format!("confusion_{alg}.csv")), pooled.to_csv()?);
        outputs.add(out_dir.join(format!("confusion_{alg}.png")), encode_png(&pooled.heatmap(32))?);
        for f in &report.folds {
            outputs.add(out_dir.join(format!("confusion_{alg}_fold{}.csv", f.fold)), f.confusion.to_csv()?);
        }
        outputs.add(out_dir.join(format!("timing_{alg}.csv")), report.timing_csv()?);

        let stems: Vec<String> = (0..manifest.rows.len()).map(|i| manifest.stem(i)).collect();
        let mut preds = Vec::new();
        for f in &report.folds {
            for (img, labels) in &f.predictions {
                for (sp, (&t, &p)) in samples[*img].truth.iter().zip(labels).enumerate() {
                    preds.push(PredictionRow { image: &stems[*img], superpixel: sp, truth: &names[t], predicted: &names[p] });
                }
            }
        }
        outputs.add(out_dir.join(format!("predictions_{alg}.csv")), to_csv(&preds)?);

        let mut summary = vec![SummaryRow { metric: "accuracy", value: format!("{:?}", pooled.accuracy()) }];
        let recall_names: Vec<String> = names.iter().map(|c| format!("recall_{c}")).collect();
        for (c, metric) in recall_names.iter().enumerate() {
            let value = pooled.recall(c).map_or_else(|| "NA".to_string(), |r| format!("{r:?}"));
            summary.push(SummaryRow { metric, value });
        }
        outputs.add(out_dir.join(format!("summary_{alg}.csv")), to_csv(&summary)?);

        println!("{alg}: accuracy {:.4}", pooled.accuracy());
        for (c, name) in names.iter().enumerate() {
            match pooled.recall(c) {
                Some(r) => println!("  {name}: recall {r:.4}"),
                None => println!("  {name}: no samples"),
            }
        }
        for f in &report.folds {
            if !f.missing_classes.is_empty() {
                println!("  fold {}: no training samples for {:?}", f.fold, f.missing_classes);
            }
        }
    }
    outputs.write()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum VaryArg {
    Train,
    Test,
}

pub struct BenchArgs<'a> {
    pub algorithm: Algorithm,
    pub vary: VaryArg,
    pub sizes: &'a [usize],
    pub fixed: usize,
    pub repetitions: usize,
    pub dims: usize,
    pub classes: usize,
    pub out: &'a Path,
}

pub fn bench(cfg: &PipelineConfig, args: &BenchArgs<'_>) -> Result<()> {
    let spec = TimingSpec {
        algorithm: args.algorithm,
        sizes: args.sizes.to_vec(),
        vary: match args.vary {
            VaryArg::Train => Vary::Train { fixed: args.fixed },
            VaryArg::Test => Vary::Test { fixed: args.fixed },
        },
        n_dims: args.dims,
        n_classes: args.classes,
        repetitions: args.repetitions,
        seed: cfg.seed,
    };
    let rows = timing_benchmark(&spec)?;
    write_one(args.out, &TimingRow::to_csv(&rows)?)?;
    for r in &rows {
        println!("train {:>7} test {:>7}: train {:.4}s test {:.4}s", r.n_train, r.n_test, r.train_secs, r.test_secs);
    }
    Ok(())
}
