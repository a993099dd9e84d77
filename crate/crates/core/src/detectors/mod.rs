//! The discrete model space and the detector families.
//!
//! Every detector maps a dataset to one score per row, oriented so that a
//! larger score means more outlying.

pub mod hbos;
pub mod iforest;
pub mod loda;
pub mod neighbors;
pub mod pca;
mod proximity;

use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use hbos::{hbos, HbosModel};
pub use iforest::{IsolationForest, TreeStats};
pub use loda::{loda, LodaModel};
pub use neighbors::{Metric, NeighborTable};
pub use pca::{pca_reconstruction, PcaModel};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::average_precision;

/// Added inside every log-density to keep scores finite.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    Lof,
    Knn,
    Cof,
    Abod,
    Iforest,
    Hbos,
    Loda,
    PcaRecon,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Lof => "LOF",
            Family::Knn => "KNN",
            Family::Cof => "COF",
            Family::Abod => "ABOD",
            Family::Iforest => "IFOREST",
            Family::Hbos => "HBOS",
            Family::Loda => "LODA",
            Family::PcaRecon => "PCA_RECON",
        }
    }

    /// Families whose scores depend on the seed.
    pub fn is_randomized(self) -> bool {
        matches!(self, Family::Iforest | Family::Loda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnnMethod {
    Largest,
    Mean,
    Median,
}

impl KnnMethod {
    fn as_str(self) -> &'static str {
        match self {
            KnnMethod::Largest => "largest",
            KnnMethod::Mean => "mean",
            KnnMethod::Median => "median",
        }
    }
}

/// A detector family together with a full hyperparameter assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum Detector {
    #[serde(rename = "LOF")]
    Lof {
        n_neighbors: usize,
        distance: Metric,
    },
    #[serde(rename = "KNN")]
    Knn {
        n_neighbors: usize,
        method: KnnMethod,
    },
    #[serde(rename = "COF")]
    Cof { n_neighbors: usize },
    #[serde(rename = "ABOD")]
    Abod { n_neighbors: usize },
    #[serde(rename = "IFOREST")]
    Iforest {
        n_estimators: usize,
        max_features: f64,
    },
    #[serde(rename = "HBOS")]
    Hbos { n_histograms: usize, tolerance: f64 },
    #[serde(rename = "LODA")]
    Loda { n_bins: usize, n_random_cuts: usize },
    #[serde(rename = "PCA_RECON")]
    PcaRecon,
}

impl Detector {
    pub fn family(&self) -> Family {
        match self {
            Detector::Lof { .. } => Family::Lof,
            Detector::Knn { .. } => Family::Knn,
            Detector::Cof { .. } => Family::Cof,
            Detector::Abod { .. } => Family::Abod,
            Detector::Iforest { .. } => Family::Iforest,
            Detector::Hbos { .. } => Family::Hbos,
            Detector::Loda { .. } => Family::Loda,
            Detector::PcaRecon => Family::PcaRecon,
        }
    }

    /// Named hyperparameters in schema order.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        match *self {
            Detector::Lof {
                n_neighbors,
                distance,
            } => vec![
                ("n_neighbors", n_neighbors.to_string()),
                ("distance", distance.as_str().to_owned()),
            ],
            Detector::Knn {
                n_neighbors,
                method,
            } => vec![
                ("n_neighbors", n_neighbors.to_string()),
                ("method", method.as_str().to_owned()),
            ],
            Detector::Cof { n_neighbors } | Detector::Abod { n_neighbors } => {
                vec![("n_neighbors", n_neighbors.to_string())]
            }
            Detector::Iforest {
                n_estimators,
                max_features,
            } => vec![
                ("n_estimators", n_estimators.to_string()),
                ("max_features", format!("{max_features:.1}")),
            ],
            Detector::Hbos {
                n_histograms,
                tolerance,
            } => vec![
                ("n_histograms", n_histograms.to_string()),
                ("tolerance", format!("{tolerance:.1}")),
            ],
            Detector::Loda {
                n_bins,
                n_random_cuts,
            } => vec![
                ("n_bins", n_bins.to_string()),
                ("n_random_cuts", n_random_cuts.to_string()),
            ],
            Detector::PcaRecon => Vec::new(),
        }
    }
}

impl fmt::Display for Detector {
    /// Compact id such as `LOF:n_neighbors=1;distance=manhattan`; contains no commas.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .params()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if params.is_empty() {
            write!(f, "{}", self.family().as_str())
        } else {
            write!(f, "{}:{}", self.family().as_str(), params.join(";"))
        }
    }
}

/// One point of the model space with its position in the canonical enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub index: usize,
    #[serde(flatten)]
    pub detector: Detector,
}

impl ModelSpec {
    pub fn family(&self) -> Family {
        self.detector.family()
    }

    pub fn id(&self) -> String {
        self.detector.to_string()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.detector.fmt(f)
    }
}

const NEIGHBOR_GRID: [usize; 12] = [1, 5, 10, 15, 20, 25, 50, 60, 70, 80, 90, 100];
const SMALL_NEIGHBOR_GRID: [usize; 7] = [3, 5, 10, 15, 20, 25, 50];
const FOREST_SIZES: [usize; 9] = [10, 20, 30, 40, 50, 75, 100, 150, 200];
const HISTOGRAM_BINS: [usize; 8] = [5, 10, 20, 30, 40, 50, 75, 100];
const LODA_BINS: [usize; 9] = [10, 20, 30, 40, 50, 75, 100, 150, 200];
const LODA_CUTS: [usize; 6] = [5, 10, 15, 20, 25, 30];

/// The canonical grid of 261 models, families in fixed order, first
/// hyperparameter outer and second inner.
pub fn enumerate_model_set() -> Vec<ModelSpec> {
    let tenths = |k: usize| k as f64 / 10.0;
    let mut out: Vec<Detector> = Vec::with_capacity(261);
    for &k in &NEIGHBOR_GRID {
        for distance in [Metric::Manhattan, Metric::Euclidean, Metric::Minkowski3] {
            out.push(Detector::Lof {
                n_neighbors: k,
                distance,
            });
        }
    }
    for &k in &NEIGHBOR_GRID {
        for method in [KnnMethod::Largest, KnnMethod::Mean, KnnMethod::Median] {
            out.push(Detector::Knn {
                n_neighbors: k,
                method,
            });
        }
    }
    out.extend(
        SMALL_NEIGHBOR_GRID
            .iter()
            .map(|&k| Detector::Cof { n_neighbors: k }),
    );
    out.extend(
        SMALL_NEIGHBOR_GRID
            .iter()
            .map(|&k| Detector::Abod { n_neighbors: k }),
    );
    for &n_estimators in &FOREST_SIZES {
        for f in 1..=9 {
            out.push(Detector::Iforest {
                n_estimators,
                max_features: tenths(f),
            });
        }
    }
    for &n_histograms in &HISTOGRAM_BINS {
        for t in 1..=5 {
            out.push(Detector::Hbos {
                n_histograms,
                tolerance: tenths(t),
            });
        }
    }
    for &n_bins in &LODA_BINS {
        for &n_random_cuts in &LODA_CUTS {
            out.push(Detector::Loda {
                n_bins,
                n_random_cuts,
            });
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(index, detector)| ModelSpec { index, detector })
        .collect()
}

/// Outlier scores, one per row; larger means more outlying.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A dataset with lazily built neighbor tables, shared by every model scored
/// on it. Scoring many models through one `PreparedData` gives the same
/// results as independent [`fit_score`] calls.
pub struct PreparedData<'a> {
    data: &'a Dataset,
    rows: Vec<f64>,
    tables: Mutex<Vec<(Metric, std::sync::Arc<NeighborTable>)>>,
}

impl<'a> PreparedData<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self {
            data,
            rows: data.rows_flat(),
            tables: Mutex::new(Vec::new()),
        }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    fn neighbors(&self, metric: Metric, k: usize) -> std::sync::Arc<NeighborTable> {
        // Build at least the largest grid neighborhood so one table serves the grid.
        let n = self.data.n_samples();
        {
            let tables = self.tables.lock().unwrap();
            if let Some((_, t)) = tables.iter().find(|(m, t)| *m == metric && t.k() >= k) {
                return t.clone();
            }
        }
        let width = k.max(NEIGHBOR_GRID[NEIGHBOR_GRID.len() - 1]).min(n - 1);
        let table = std::sync::Arc::new(NeighborTable::build(
            &self.rows,
            n,
            self.data.n_features(),
            width,
            metric,
        ));
        let mut tables = self.tables.lock().unwrap();
        tables.retain(|(m, _)| *m != metric);
        tables.push((metric, table.clone()));
        table
    }

    pub fn score(&self, detector: &Detector, seed: u64) -> Result<ScoreVector> {
        validate(detector, self.data)?;
        let n = self.data.n_samples();
        let scores = match *detector {
            Detector::Knn {
                n_neighbors,
                method,
            } => proximity::knn(
                &self.neighbors(Metric::Euclidean, n_neighbors),
                n_neighbors,
                method,
            ),
            Detector::Lof {
                n_neighbors,
                distance,
            } => proximity::lof(&self.neighbors(distance, n_neighbors), n_neighbors),
            Detector::Cof { n_neighbors } => proximity::cof(
                &self.rows,
                self.data.n_features(),
                &self.neighbors(Metric::Euclidean, n_neighbors),
                n_neighbors,
            ),
            Detector::Abod { n_neighbors } => proximity::abod(
                &self.rows,
                self.data.n_features(),
                &self.neighbors(Metric::Euclidean, n_neighbors),
                n_neighbors,
            ),
            Detector::Iforest {
                n_estimators,
                max_features,
            } => IsolationForest::fit(self.data, n_estimators, max_features, seed).score(self.data),
            Detector::Hbos {
                n_histograms,
                tolerance,
            } => hbos(self.data, n_histograms, tolerance).scores,
            Detector::Loda {
                n_bins,
                n_random_cuts,
            } => loda(self.data, n_bins, n_random_cuts, seed).scores,
            Detector::PcaRecon => pca_reconstruction(self.data)?.scores,
        };
        debug_assert_eq!(scores.len(), n);
        Ok(ScoreVector(
            scores
                .into_iter()
                .map(|s| {
                    if s.is_finite() {
                        s
                    } else {
                        f64::MAX.copysign(s)
                    }
                })
                .collect(),
        ))
    }
}

fn validate(detector: &Detector, data: &Dataset) -> Result<()> {
    let n = data.n_samples();
    let bad = |m: String| Err(Error::InvalidHyperparameter(m));
    match *detector {
        Detector::Lof { n_neighbors, .. }
        | Detector::Knn { n_neighbors, .. }
        | Detector::Cof { n_neighbors }
        | Detector::Abod { n_neighbors } => {
            if n_neighbors == 0 || n_neighbors >= n {
                return bad(format!(
                    "{detector}: n_neighbors must lie in [1, n) with n = {n}"
                ));
            }
            if matches!(detector, Detector::Abod { .. }) && n_neighbors < 2 {
                return bad(format!("{detector}: ABOD needs at least 2 neighbors"));
            }
        }
        Detector::Iforest {
            n_estimators,
            max_features,
        } => {
            if n_estimators == 0 || !(max_features > 0.0 && max_features <= 1.0) {
                return bad(format!(
                    "{detector}: need n_estimators >= 1, max_features in (0, 1]"
                ));
            }
        }
        Detector::Hbos {
            n_histograms,
            tolerance,
        } => {
            if n_histograms == 0 || !(0.0..=1.0).contains(&tolerance) {
                return bad(format!(
                    "{detector}: need n_histograms >= 1, tolerance in [0, 1]"
                ));
            }
        }
        Detector::Loda {
            n_bins,
            n_random_cuts,
        } => {
            if n_bins == 0 || n_random_cuts == 0 {
                return bad(format!(
                    "{detector}: need n_bins >= 1 and n_random_cuts >= 1"
                ));
            }
        }
        Detector::PcaRecon => {}
    }
    Ok(())
}

pub fn fit_score(spec: &ModelSpec, data: &Dataset, seed: u64) -> Result<ScoreVector> {
    PreparedData::new(data).score(&spec.detector, seed)
}

/// Mean average precision over `n_trials` seeds `base_seed + t`; deterministic
/// families are scored once.
pub fn score_to_ap_trials(
    spec: &ModelSpec,
    data: &Dataset,
    n_trials: usize,
    base_seed: u64,
) -> Result<f64> {
    ap_trials(
        &PreparedData::new(data),
        &spec.detector,
        n_trials,
        base_seed,
    )
}

pub fn ap_trials(
    prepared: &PreparedData<'_>,
    detector: &Detector,
    n_trials: usize,
    base_seed: u64,
) -> Result<f64> {
    let labels = prepared
        .data()
        .labels()
        .ok_or_else(|| Error::Unlabeled(prepared.data().name().to_owned()))?;
    let trials = if detector.family().is_randomized() {
        n_trials.max(1)
    } else {
        1
    };
    let mut total = 0.0;
    for t in 0..trials {
        let scores = prepared.score(detector, base_seed.wrapping_add(t as u64))?;
        total += average_precision(scores.as_slice(), labels)?;
    }
    Ok(total / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_order() {
        let models = enumerate_model_set();
        assert_eq!(models.len(), 261);
        assert_eq!(
            models[0].detector,
            Detector::Lof {
                n_neighbors: 1,
                distance: Metric::Manhattan
            }
        );
        assert_eq!(
            models[1].detector,
            Detector::Lof {
                n_neighbors: 1,
                distance: Metric::Euclidean
            }
        );
        assert!(models.iter().enumerate().all(|(i, m)| m.index == i));
        let count = |f: Family| models.iter().filter(|m| m.family() == f).count();
        assert_eq!(count(Family::Lof), 36);
        assert_eq!(count(Family::Knn), 36);
        assert_eq!(count(Family::Cof), 7);
        assert_eq!(count(Family::Abod), 7);
        assert_eq!(count(Family::Iforest), 81);
        assert_eq!(count(Family::Hbos), 40);
        assert_eq!(count(Family::Loda), 54);
        assert_eq!(models[260].to_string(), "LODA:n_bins=200;n_random_cuts=30");
    }

    #[test]
    fn grid_entries_distinct() {
        let ids: std::collections::BTreeSet<String> =
            enumerate_model_set().iter().map(ModelSpec::id).collect();
        assert_eq!(ids.len(), 261);
        assert!(ids.iter().all(|id| !id.contains(',')));
    }

    #[test]
    fn spec_json_shape() {
        let m = enumerate_model_set()[0];
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(
            json,
            r#"{"index":0,"family":"LOF","params":{"n_neighbors":1,"distance":"manhattan"}}"#
        );
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn neighbor_count_must_be_below_n() {
        let d = Dataset::from_rows("t", &[vec![0.0], vec![1.0], vec![2.0]], None).unwrap();
        let spec = ModelSpec {
            index: 0,
            detector: Detector::Knn {
                n_neighbors: 3,
                method: KnnMethod::Largest,
            },
        };
        assert!(matches!(
            fit_score(&spec, &d, 0),
            Err(Error::InvalidHyperparameter(_))
        ));
    }
}
