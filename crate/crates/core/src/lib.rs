//! Possibilistic segmentation of grayscale texture imagery.
//!
//! The pipeline computes per-pixel texture features, averages them over
//! superpixels, and then either clusters the superpixels with PFLICM (and
//! names the clusters from labeled training data) or classifies them with a
//! possibilistic k-nearest-neighbor rule. Both produce per-class scores that
//! need not sum to one, so samples unlike any training texture score low
//! everywhere.

pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod model_io;
pub mod pflicm;
pub mod pknn;
pub mod superpixels;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use features::{extract_features, FeatureConfig, FeatureStack, LacunarityConfig, SobelBankConfig};
pub use model_io::{load_model, save_model, Model};
pub use pflicm::{NeighborGraph, PflicmModel};
pub use pknn::PknnModel;
pub use superpixels::{aggregate_features, SuperpixelMap};
pub use types::{AssignmentMaps, FeatureMatrix, LabeledDataset, PflicmParams, PknnParams, ZScore};
