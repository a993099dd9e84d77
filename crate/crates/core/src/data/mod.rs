//! Datasets, CSV ingestion and the synthetic sibling testbed.

mod corpus;
mod csv_io;
mod testbed;

pub use corpus::{load_corpus, write_testbed, Corpus, DEFAULT_LABEL_COLUMN, MANIFEST_FILE};
pub use csv_io::{load_csv, write_csv};
pub use testbed::{
    generate_motherset, make_poc_testbed, sample_childset, FoldAssignment, TestbedConfig,
    TestbedEntry, TestbedManifest,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A numeric feature table with optional binary outlier labels (1 = outlier).
///
/// Immutable once constructed; every constructor path validates the
/// invariants (n >= 3, p >= 1, finite entries, labels with both classes).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    x: DMatrix<f64>,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, x: DMatrix<f64>, labels: Option<Vec<u8>>) -> Result<Self> {
        let name = name.into();
        let (n, p) = x.shape();
        if n < 3 || p < 1 {
            return Err(Error::DegenerateDataset(format!(
                "{name}: need n >= 3 and p >= 1, got {n}x{p}"
            )));
        }
        if let Some((idx, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::DegenerateDataset(format!(
                "{name}: non-finite value at row {}, column {}",
                idx % n,
                idx / n
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::DegenerateDataset(format!(
                    "{name}: labels must be 0/1"
                )));
            }
            let positives = labels.iter().filter(|&&l| l == 1).count();
            if positives == 0 || positives == n {
                return Err(Error::DegenerateDataset(format!(
                    "{name}: labels must contain both classes"
                )));
            }
        }
        Ok(Self { name, x, labels })
    }

    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidConfig("ragged rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        Self::new(name, x, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn outlier_fraction(&self) -> Option<f64> {
        self.labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v == 1).count() as f64 / l.len() as f64)
    }

    /// Copy of this dataset with labels removed.
    pub fn without_labels(&self) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.clone(),
            labels: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    /// Row-major copy of the feature matrix.
    pub fn rows_flat(&self) -> Vec<f64> {
        let (n, p) = self.x.shape();
        let mut out = Vec::with_capacity(n * p);
        for i in 0..n {
            out.extend(self.x.row(i).iter());
        }
        out
    }

    /// Dataset consisting of the given rows, in the given order.
    pub fn select_rows(&self, name: impl Into<String>, rows: &[usize]) -> Result<Self> {
        let x = self.x.select_rows(rows);
        let labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&r| l[r]).collect());
        Self::new(name, x, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_and_single_class() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            Dataset::from_rows("t", &rows, None),
            Err(Error::DegenerateDataset(_))
        ));
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(Dataset::from_rows("t", &rows, Some(vec![0, 0, 0])).is_err());
        assert!(Dataset::from_rows("t", &rows, Some(vec![0, 0, 1])).is_ok());
    }

    #[test]
    fn rejects_non_finite() {
        let rows = vec![vec![0.0], vec![f64::NAN], vec![2.0]];
        assert!(Dataset::from_rows("t", &rows, None).is_err());
    }

    #[test]
    fn outlier_fraction_counts_positives() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let d = Dataset::from_rows("t", &rows, Some(vec![0, 1, 0, 0])).unwrap();
        assert_eq!(d.outlier_fraction(), Some(0.25));
        assert_eq!(d.without_labels().outlier_fraction(), None);
    }
}
