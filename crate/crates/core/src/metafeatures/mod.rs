//! Meta-feature extraction.
//!
//! A dataset is summarized by a fixed-length vector: a block of statistics of
//! the raw feature values followed by a block describing how four cheap
//! landmarker detectors behave on it. Slots that cannot be computed on a given
//! dataset (for example the skewness of a constant column) hold NaN; they are
//! imputed when the vectors are embedded.
//!
//! The slot layout is frozen. [`feature_names`] lists it and the checked-in
//! `metafeatures.manifest` mirrors it one line per slot.

mod landmark;
mod statistical;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::Result;

pub use landmark::{extract_landmarker, landmarker_names, LANDMARKER_LEN};
pub use statistical::{
    extract_statistical, extract_statistical_matrix, statistical_names, STATISTICAL_LEN,
};

/// Total number of meta-feature slots.
pub const META_FEATURE_LEN: usize = STATISTICAL_LEN + LANDMARKER_LEN;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetaFeatureVector(pub Vec<f64>);

impl MetaFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Value of the named slot.
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_names()
            .iter()
            .position(|n| n == name)
            .map(|i| self.0[i])
    }
}

/// Statistical block followed by the landmarker block. Labels are never read.
pub fn extract(data: &Dataset, seed: u64) -> Result<MetaFeatureVector> {
    let mut values = extract_statistical(data);
    values.extend(extract_landmarker(data, seed)?);
    debug_assert_eq!(values.len(), META_FEATURE_LEN);
    Ok(MetaFeatureVector(values))
}

pub fn feature_names() -> Vec<String> {
    let mut names = statistical_names();
    names.extend(landmarker_names());
    names
}

/// The manifest as written to disk: `index<TAB>name`, one slot per line.
pub fn manifest_text() -> String {
    feature_names()
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{i}\t{n}\n"))
        .collect()
}

/// SHA-256 of [`manifest_text`], stored in trained learners.
pub fn manifest_hash() -> String {
    hex::encode(Sha256::digest(manifest_text().as_bytes()))
}

/// Stacks vectors into an n × d matrix.
pub fn stack(vectors: &[MetaFeatureVector]) -> DMatrix<f64> {
    let d = vectors.first().map_or(META_FEATURE_LEN, |v| v.len());
    DMatrix::from_fn(vectors.len(), d, |i, j| vectors[i].0[j])
}

pub(crate) fn push_six(out: &mut Vec<f64>, xs: &[f64]) {
    out.extend_from_slice(&crate::stats::six_summary(xs));
}

pub(crate) fn six_names(out: &mut Vec<String>, prefix: &str) {
    for s in crate::stats::SIX_SUMMARY_NAMES {
        out.push(format!("{prefix}_{s}"));
    }
}
