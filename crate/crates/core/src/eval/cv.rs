//! Cross-validation over images and the train/test timing benchmark.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{confusion, crisp_labels_pflicm, crisp_labels_pknn, ConfusionMatrix, FoldPlan};
use crate::error::{Error, Result};
use crate::pflicm::{self, NeighborGraph, PflicmModel};
use crate::pknn::{self, PknnModel};
use crate::synth::{feature_blobs, lattice_graph};
use crate::types::{FeatureMatrix, LabeledDataset, PflicmParams, PknnParams, ZScore};

/// One image's superpixel features, neighborhoods and ground truth.
#[derive(Debug, Clone)]
pub struct ImageSample {
    /// Raw (unnormalized) superpixel features.
    pub features: FeatureMatrix,
    pub graph: NeighborGraph,
    /// Ground-truth class per superpixel.
    pub truth: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Algorithm {
    Pflicm(PflicmParams),
    Pknn(PknnParams),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Pflicm(_) => "pflicm",
            Algorithm::Pknn(_) => "pknn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub algorithm: Algorithm,
    /// Z-score features with statistics of each fold's training images.
    pub normalize: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub confusion: ConfusionMatrix,
    pub train_secs: f64,
    pub test_secs: f64,
    /// Classes absent from this fold's training data.
    pub missing_classes: Vec<usize>,
    /// Crisp labels for each test image, in the fold's image order.
    pub predictions: Vec<(usize, Vec<usize>)>,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    /// Sum of the per-fold confusion matrices.
    pub fn pooled(&self) -> ConfusionMatrix {
        let mut total = self.folds[0].confusion.clone();
        for f in &self.folds[1..] {
            total.merge(&f.confusion).expect("same classes in every fold");
        }
        total
    }

    /// `fold,train_secs,test_secs`
    pub fn timing_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fold", "train_secs", "test_secs"])?;
        for f in &self.folds {
            w.write_record([f.fold.to_string(), format!("{:?}", f.train_secs), format!("{:?}", f.test_secs)])?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }
}

fn training_set(samples: &[ImageSample], ids: &[usize], class_names: &[String]) -> Result<(LabeledDataset, NeighborGraph)> {
    let features = FeatureMatrix::vstack(ids.iter().map(|&i| &samples[i].features))?;
    let labels = ids.iter().flat_map(|&i| samples[i].truth.iter().copied()).collect();
    let graph = NeighborGraph::disjoint_union(ids.iter().map(|&i| &samples[i].graph));
    Ok((LabeledDataset::new(features, labels, class_names.to_vec())?, graph))
}

/// A model trained on one fold.
enum Trained {
    Pflicm(PflicmModel),
    Pknn(PknnModel),
}

impl Trained {
    fn fit(train: &LabeledDataset, graph: &NeighborGraph, opts: &CvOptions) -> Result<Trained> {
        let normalizer = opts.normalize.then(|| ZScore::fit(train.features()));
        let train = match &normalizer {
            Some(z) => LabeledDataset::new(
                z.apply(train.features())?,
                train.labels().to_vec(),
                train.class_names().to_vec(),
            )?,
            None => train.clone(),
        };
        Ok(match opts.algorithm {
            Algorithm::Pflicm(params) => {
                let fit = pflicm::fit(train.features(), graph, &params, opts.seed)?;
                if !fit.converged {
                    log::warn!("PFLICM stopped at max_iters without converging");
                }
                let (mut model, _) = pflicm::label_clusters(&fit.model, &train, &fit.assignments)?;
                model.normalizer = normalizer;
                Trained::Pflicm(model)
            }
            Algorithm::Pknn(params) => Trained::Pknn(pknn::fit(&train, &params)?.with_normalizer(normalizer)?),
        })
    }

    fn predict(&self, sample: &ImageSample) -> Result<Vec<usize>> {
        match self {
            Trained::Pflicm(m) => {
                let maps = m.predict(&m.prepare(&sample.features)?, &sample.graph)?;
                crisp_labels_pflicm(&maps, m)
            }
            Trained::Pknn(m) => Ok(crisp_labels_pknn(&m.classify_batch(&m.prepare(&sample.features)?)?)),
        }
    }
}

/// Train on all other folds, predict each held-out image, tally crisp labels.
pub fn run_cross_validation(
    samples: &[ImageSample],
    class_names: &[String],
    plan: &FoldPlan,
    opts: &CvOptions,
) -> Result<CvReport> {
    if plan.n_items() != samples.len() {
        return Err(Error::Shape(format!(
            "fold plan covers {} images, {} supplied",
            plan.n_items(),
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.truth.len() != s.features.n_samples() || s.graph.len() != s.features.n_samples() {
            return Err(Error::Shape(format!("image {i}: features, graph and truth disagree in length")));
        }
    }
    let mut folds = Vec::with_capacity(plan.n_folds());
    for fold in 0..plan.n_folds() {
        let train_ids = plan.train_ids(fold);
        let (train, graph) = training_set(samples, &train_ids, class_names)?;
        let missing_classes: Vec<usize> = train
            .class_counts()
            .iter()
            .enumerate()
            .filter_map(|(c, &n)| (n == 0).then_some(c))
            .collect();
        if !missing_classes.is_empty() {
            log::warn!("fold {fold}: no training samples for classes {missing_classes:?}");
        }

        let start = Instant::now();
        let model = Trained::fit(&train, &graph, opts)?;
        let train_secs = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let predictions = plan
            .test_ids(fold)
            .iter()
            .map(|&i| Ok((i, model.predict(&samples[i])?)))
            .collect::<Result<Vec<_>>>()?;
        let test_secs = start.elapsed().as_secs_f64();

        let truth: Vec<usize> = predictions.iter().flat_map(|(i, _)| samples[*i].truth.iter().copied()).collect();
        let pred: Vec<usize> = predictions.iter().flat_map(|(_, p)| p.iter().copied()).collect();
        folds.push(FoldResult {
            fold,
            confusion: confusion(&truth, &pred, class_names)?,
            train_secs,
            test_secs,
            missing_classes,
            predictions,
        });
    }
    Ok(CvReport { folds })
}

/// Which phase's input grows across benchmark rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vary {
    /// Sizes are training-set sizes; the test set stays at `fixed`.
    Train { fixed: usize },
    /// Sizes are test-set sizes; the training set stays at `fixed`.
    Test { fixed: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingSpec {
    pub algorithm: Algorithm,
    pub sizes: Vec<usize>,
    pub vary: Vary,
    pub n_dims: usize,
    pub n_classes: usize,
    pub repetitions: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRow {
    pub n_train: usize,
    pub n_test: usize,
    /// Median wall-clock seconds.
    pub train_secs: f64,
    pub test_secs: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Train and test wall-clock times on Gaussian blob data, one row per size.
pub fn timing_benchmark(spec: &TimingSpec) -> Result<Vec<TimingRow>> {
    if spec.repetitions == 0 {
        return Err(Error::InvalidParam("repetitions must be >= 1".into()));
    }
    let blobs = |n: usize| feature_blobs(n, spec.n_dims, spec.n_classes, 3.0, spec.seed);
    let mut rows = Vec::with_capacity(spec.sizes.len());
    for &size in &spec.sizes {
        let (n_train, n_test) = match spec.vary {
            Vary::Train { fixed } => (size, fixed),
            Vary::Test { fixed } => (fixed, size),
        };
        // Same blob means for both sets; different draws.
        let train = blobs(n_train)?;
        let test = shifted_draws(&blobs(n_test)?, spec.seed)?;
        let train_graph = lattice_graph(n_train);
        let test_graph = lattice_graph(n_test);
        let mut train_times = Vec::new();
        let mut test_times = Vec::new();
        for _ in 0..spec.repetitions {
            let start = Instant::now();
            match spec.algorithm {
                Algorithm::Pflicm(params) => {
                    let fit = pflicm::fit(train.features(), &train_graph, &params, spec.seed)?;
                    let (model, _) = pflicm::label_clusters(&fit.model, &train, &fit.assignments)?;
                    train_times.push(start.elapsed().as_secs_f64());
                    let start = Instant::now();
                    let maps = model.predict(test.features(), &test_graph)?;
                    std::hint::black_box(crisp_labels_pflicm(&maps, &model)?);
                    test_times.push(start.elapsed().as_secs_f64());
                }
                Algorithm::Pknn(params) => {
                    let model = pknn::fit(&train, &params)?;
                    train_times.push(start.elapsed().as_secs_f64());
                    let start = Instant::now();
                    std::hint::black_box(crisp_labels_pknn(&model.classify_batch(test.features())?));
                    test_times.push(start.elapsed().as_secs_f64());
                }
            }
        }
        rows.push(TimingRow {
            n_train,
            n_test,
            train_secs: median(train_times),
            test_secs: median(test_times),
        });
    }
    Ok(rows)
}

/// Fresh noise around the same blob means as `t`.
fn shifted_draws(t: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut data = t.features().view().clone();
    data.mapv_inplace(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + 0.5 * z
    });
    LabeledDataset::new(FeatureMatrix::new(data)?, t.labels().to_vec(), t.class_names().to_vec())
}

impl TimingRow {
    pub fn to_csv(rows: &[TimingRow]) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }
}
