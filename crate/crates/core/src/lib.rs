//! Single-shot model selection for unsupervised outlier detection.
//!
//! Offline, a corpus of labeled datasets is scored by every model of a fixed
//! grid; the resulting performance matrix is factorized under a smoothed DCG
//! objective, with dataset factors initialized from meta-features. Online, a
//! new dataset's meta-features are mapped to a dataset factor and the model
//! with the highest predicted performance is returned, without fitting any
//! candidate.

pub mod baselines;
pub mod data;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod metafeatures;
pub mod metalearner;
pub mod perf_io;
pub mod rankmf;
pub mod regressor;
pub mod seed;
mod serde_rows;
pub mod stats;

pub use data::Dataset;
pub use detectors::{enumerate_model_set, fit_score, Detector, ModelSpec, ScoreVector};
pub use error::{Error, Result};
pub use metalearner::{MetaLearner, TrainConfig};
