//! JSON model files: `{format_version, kind, params, payload}`.
//!
//! Reals are written in shortest round-trip form, so a loaded model is
//! bit-identical to the saved one.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::pflicm::{ClusterLabels, PflicmModel};
use crate::pknn::PknnModel;
use crate::types::{serde_array2, FeatureMatrix, PflicmParams, PknnParams, ZScore};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pflicm(PflicmModel),
    Pknn(PknnModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Pflicm(_) => "pflicm",
            Model::Pknn(_) => "pknn",
        }
    }
}

impl From<PflicmModel> for Model {
    fn from(m: PflicmModel) -> Self {
        Model::Pflicm(m)
    }
}

impl From<PknnModel> for Model {
    fn from(m: PknnModel) -> Self {
        Model::Pknn(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    kind: String,
    params: Value,
    payload: Value,
}

#[derive(Serialize, Deserialize)]
struct PflicmPayload {
    #[serde(with = "serde_array2")]
    centers: ndarray::Array2<f64>,
    gammas: Vec<f64>,
    cluster_labels: Option<ClusterLabels>,
    normalizer: Option<ZScore>,
}

#[derive(Serialize, Deserialize)]
struct PknnPayload {
    train_features: FeatureMatrix,
    train_labels: Vec<usize>,
    #[serde(with = "serde_array2")]
    train_fuzzy: ndarray::Array2<f64>,
    class_names: Vec<String>,
    normalizer: Option<ZScore>,
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::InvalidInput(format!("model serialization: {e}")))
}

/// Serialize a model to JSON text after checking its invariants.
pub fn model_to_json(model: &Model) -> Result<String> {
    let (params, payload) = match model {
        Model::Pflicm(m) => {
            m.validate()?;
            (
                to_value(&m.params)?,
                to_value(&PflicmPayload {
                    centers: m.centers.clone(),
                    gammas: m.gammas.clone(),
                    cluster_labels: m.cluster_labels.clone(),
                    normalizer: m.normalizer.clone(),
                })?,
            )
        }
        Model::Pknn(m) => {
            // A model built through `fit` or `from_parts` is already valid;
            // the features were checked finite on construction.
            crate::types::ensure_finite(m.train_fuzzy().iter(), "soft labels")?;
            (
                to_value(m.params())?,
                to_value(&PknnPayload {
                    train_features: m.train_features().clone(),
                    train_labels: m.train_labels().to_vec(),
                    train_fuzzy: m.train_fuzzy().clone(),
                    class_names: m.class_names().to_vec(),
                    normalizer: m.normalizer().cloned(),
                })?,
            )
        }
    };
    let env = Envelope {
        format_version: FORMAT_VERSION,
        kind: model.kind().to_string(),
        params,
        payload,
    };
    serde_json::to_string_pretty(&env).map_err(|e| Error::InvalidInput(format!("model serialization: {e}")))
}

/// Parse JSON text produced by [`model_to_json`]. `path` only labels errors.
pub fn model_from_json(text: &str, path: &Path) -> Result<Model> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| Error::parse(path, e.to_string()))?;
    if env.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            expected: FORMAT_VERSION,
            found: env.format_version,
        });
    }
    let field = |e: serde_json::Error| Error::parse(path, e.to_string());
    match env.kind.as_str() {
        "pflicm" => {
            let params: PflicmParams = serde_json::from_value(env.params).map_err(field)?;
            let p: PflicmPayload = serde_json::from_value(env.payload).map_err(field)?;
            let model = PflicmModel {
                centers: p.centers,
                gammas: p.gammas,
                params,
                cluster_labels: p.cluster_labels,
                normalizer: p.normalizer,
            };
            model.validate()?;
            Ok(Model::Pflicm(model))
        }
        "pknn" => {
            let params: PknnParams = serde_json::from_value(env.params).map_err(field)?;
            let p: PknnPayload = serde_json::from_value(env.payload).map_err(field)?;
            Ok(Model::Pknn(PknnModel::from_parts(
                p.train_features,
                p.train_labels,
                p.train_fuzzy,
                p.class_names,
                params,
                p.normalizer,
            )?))
        }
        other => Err(Error::parse(path, format!("unknown model kind {other:?}"))),
    }
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let text = model_to_json(model)?;
    write_atomic(path, text.as_bytes())
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text, path)
}

pub fn load_pflicm(path: &Path) -> Result<PflicmModel> {
    match load_model(path)? {
        Model::Pflicm(m) => Ok(m),
        other => Err(Error::ModelKind {
            expected: "pflicm".into(),
            found: other.kind().into(),
        }),
    }
}

pub fn load_pknn(path: &Path) -> Result<PknnModel> {
    match load_model(path)? {
        Model::Pknn(m) => Ok(m),
        other => Err(Error::ModelKind {
            expected: "pknn".into(),
            found: other.kind().into(),
        }),
    }
}
