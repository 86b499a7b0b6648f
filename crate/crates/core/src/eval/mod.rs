//! Crisp labels, confusion matrices, fold plans and cross-validation.

mod cv;

use image::{ImageBuffer, Luma};
use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::pflicm::PflicmModel;
use crate::types::{argmax, validate_class_names, AssignmentMaps};

pub use cv::{
    run_cross_validation, timing_benchmark, Algorithm, CvOptions, CvReport, FoldResult,
    ImageSample, TimingRow, TimingSpec, Vary,
};

/// Per sample, the cluster with the largest `u·t` (lowest index on ties),
/// mapped to that cluster's class.
pub fn crisp_labels_pflicm(assign: &AssignmentMaps, model: &PflicmModel) -> Result<Vec<usize>> {
    let labels = model.labels()?;
    if assign.n_clusters() != labels.classes.len() {
        return Err(Error::Shape(format!(
            "{} cluster rows for a {}-cluster model",
            assign.n_clusters(),
            labels.classes.len()
        )));
    }
    Ok(assign
        .products()
        .axis_iter(Axis(1))
        .map(|col| labels.classes[argmax(col)])
        .collect())
}

/// Per sample (column of a classes × samples matrix), the class with the
/// highest confidence; ties go to the lowest class id.
pub fn crisp_labels_pknn(conf: &Array2<f64>) -> Vec<usize> {
    conf.axis_iter(Axis(1)).map(argmax).collect()
}

/// Counts of (true, predicted) class pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// Rows are true classes, columns predicted classes.
    counts: Array2<u64>,
    class_names: Vec<String>,
}

pub fn confusion(true_labels: &[usize], pred_labels: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::Shape(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::empty(class_names.to_vec())?;
    let l = class_names.len();
    for (&t, &p) in true_labels.iter().zip(pred_labels) {
        if t >= l || p >= l {
            return Err(Error::InvalidInput(format!("label pair ({t}, {p}) outside {l} classes")));
        }
        cm.counts[[t, p]] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn empty(class_names: Vec<String>) -> Result<Self> {
        validate_class_names(&class_names)?;
        let l = class_names.len();
        Ok(ConfusionMatrix {
            counts: Array2::zeros((l, l)),
            class_names,
        })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Trace over total; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.counts.diag().sum() as f64 / total as f64
    }

    /// Row-normalized diagonal entry, `None` when the class never occurs.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let row = self.counts.row(class).sum();
        (row > 0).then(|| self.counts[[class, class]] as f64 / row as f64)
    }

    /// Each row divided by its total; empty rows stay zero.
    pub fn rates(&self) -> Array2<f64> {
        let mut r = self.counts.mapv(|c| c as f64);
        for mut row in r.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        r
    }

    /// Element-wise sum with another matrix over the same classes.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::Shape("confusion matrices over different classes".into()));
        }
        self.counts += &other.counts;
        Ok(())
    }

    /// CSV with a `true\predicted` corner, one row per true class: counts
    /// first, then the row-normalized rates.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.class_names.iter().cloned());
        header.extend(self.class_names.iter().map(|c| format!("rate_{c}")));
        w.write_record(&header)?;
        let rates = self.rates();
        for (i, name) in self.class_names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.counts.row(i).iter().map(|c| c.to_string()));
            rec.extend(rates.row(i).iter().map(|r| format!("{r:?}")));
            w.write_record(&rec)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidInput(format!("csv buffer: {e}")))
    }

    /// Grayscale heatmap of the row-normalized rates, `cell` pixels per entry,
    /// white for 1 and black for 0.
    pub fn heatmap(&self, cell: u32) -> ImageBuffer<Luma<u8>, Vec<u8>> {
        let rates = self.rates();
        let l = self.class_names.len() as u32;
        ImageBuffer::from_fn(l * cell, l * cell, |x, y| {
            let v = rates[[(y / cell) as usize, (x / cell) as usize]];
            Luma([(v * 255.0).round() as u8])
        })
    }
}

/// Disjoint folds of item ids that together cover `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    /// Contiguous folds whose sizes differ by at most one, smaller folds
    /// first: 98 items in 3 folds gives 32, 33, 33.
    pub fn even(n_items: usize, n_folds: usize) -> Result<Self> {
        if n_folds == 0 || n_items < n_folds {
            return Err(Error::InvalidParam(format!(
                "cannot split {n_items} items into {n_folds} folds"
            )));
        }
        let base = n_items / n_folds;
        let extra = n_items % n_folds;
        let mut folds = Vec::with_capacity(n_folds);
        let mut next = 0;
        for f in 0..n_folds {
            let size = base + usize::from(f >= n_folds - extra);
            folds.push((next..next + size).collect());
            next += size;
        }
        Ok(FoldPlan { folds })
    }

    pub fn from_folds(folds: Vec<Vec<usize>>) -> Result<Self> {
        let n: usize = folds.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for &id in folds.iter().flatten() {
            if id >= n || seen[id] {
                return Err(Error::InvalidInput(format!(
                    "folds must partition 0..{n}; id {id} is repeated or out of range"
                )));
            }
            seen[id] = true;
        }
        if folds.is_empty() || folds.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("every fold needs at least one item".into()));
        }
        Ok(FoldPlan { folds })
    }

    pub fn n_folds(&self) -> usize {
        self.folds.len()
    }

    pub fn n_items(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }

    pub fn test_ids(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Items of every other fold. With a single fold this is the fold itself.
    pub fn train_ids(&self, fold: usize) -> Vec<usize> {
        if self.folds.len() == 1 {
            return self.folds[0].clone();
        }
        let mut ids: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn fold_of(&self, id: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&id))
    }
}

#[cfg(test)]
mod tests;
