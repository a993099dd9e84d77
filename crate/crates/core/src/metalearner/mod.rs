//! Offline training and online selection.
//!
//! Training scores every model of the grid on every corpus dataset, extracts
//! meta-features, factorizes the performance matrix starting from the
//! embedded meta-features and fits a regressor from the embedding to the
//! learned dataset factors. Selection runs only the extractor, the embedding,
//! the regressor and one matrix-vector product.

mod persist;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use persist::{from_json, load, save, to_json, FORMAT_VERSION};

use crate::data::Dataset;
use crate::detectors::{ap_trials, enumerate_model_set, ModelSpec, PreparedData};
use crate::error::{Error, Result};
use crate::metafeatures::{self, MetaFeatureVector};
use crate::rankmf::{self, OptimizerConfig, PerformanceMatrix};
use crate::regressor::{EmbeddingModel, ForestConfig, TreeEnsembleRegressor};
use crate::stats::argmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent dimension; at most `n_datasets - 2`.
    pub k: usize,
    /// Seeds averaged per randomized model when building the performance matrix.
    pub n_trials: usize,
    /// Seed for meta-feature extraction and the first scoring trial.
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub forest: ForestConfig,
}

/// Optimizer schedule used with the full model grid.
pub const GRID_LR_BASE: f64 = 10.0;
pub const GRID_LR_MAX: f64 = 100.0;
pub const GRID_MAX_EPOCHS: usize = 100;
pub const GRID_TOL: f64 = 1e-9;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            n_trials: 5,
            seed: 0,
            optimizer: OptimizerConfig {
                lr_base: GRID_LR_BASE,
                lr_max: GRID_LR_MAX,
                max_epochs: GRID_MAX_EPOCHS,
                tol: GRID_TOL,
                ..OptimizerConfig::default()
            },
            forest: ForestConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Same seed everywhere.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.optimizer.seed = seed;
        self.forest.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_datasets: usize,
    pub dataset_ids: Vec<String>,
    pub config: TrainConfig,
}

/// The trained selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaLearner {
    pub k: usize,
    pub manifest_hash: String,
    pub phi: EmbeddingModel,
    pub forest: TreeEnsembleRegressor,
    /// m × k model factors.
    #[serde(rename = "V", with = "crate::serde_rows")]
    pub v: DMatrix<f64>,
    pub model_list: Vec<ModelSpec>,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
    /// Requested latent dimension and the one actually used.
    pub k_requested: usize,
    pub k_used: usize,
    /// Mean over training rows of `max_j P_ij - P_i,selected` with the
    /// selection read from the learned factors.
    pub training_regret: f64,
    /// The same quantity for always picking the best model on average.
    pub global_best_regret: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen: ModelSpec,
    /// Predicted performance of every model, in grid order.
    pub predicted: Vec<f64>,
}

impl Selection {
    /// Indices of the `n` highest predictions, ties toward the smaller index.
    pub fn top(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.predicted.len()).collect();
        order.sort_by(|&a, &b| {
            self.predicted[b]
                .total_cmp(&self.predicted[a])
                .then(a.cmp(&b))
        });
        order.truncate(n);
        order
    }
}

/// Average precision of every model on every dataset, averaged over
/// `n_trials` seeds for randomized families.
pub fn build_performance_matrix(
    corpus: &[Dataset],
    models: &[ModelSpec],
    n_trials: usize,
    base_seed: u64,
) -> Result<PerformanceMatrix> {
    let rows: Vec<Vec<f64>> = corpus
        .iter()
        .map(|d| performance_row(d, models, n_trials, base_seed))
        .collect::<Result<_>>()?;
    let n = corpus.len();
    let m = models.len();
    PerformanceMatrix::new(
        DMatrix::from_fn(n, m, |i, j| rows[i][j]),
        corpus.iter().map(|d| d.name().to_owned()).collect(),
        models.iter().map(|s| s.id()).collect(),
    )
}

/// One performance-matrix row; models are scored in parallel.
pub fn performance_row(
    data: &Dataset,
    models: &[ModelSpec],
    n_trials: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    if data.labels().is_none() {
        return Err(Error::Unlabeled(data.name().to_owned()));
    }
    let prepared = PreparedData::new(data);
    models
        .par_iter()
        .map(|spec| ap_trials(&prepared, &spec.detector, n_trials, base_seed))
        .collect()
}

/// Meta-features of every dataset, extracted in parallel.
pub fn extract_corpus(corpus: &[Dataset], seed: u64) -> Result<Vec<MetaFeatureVector>> {
    corpus
        .par_iter()
        .map(|d| metafeatures::extract(d, seed))
        .collect()
}

/// Algorithm entry point: builds the performance matrix and trains.
pub fn train_offline(
    corpus: &[Dataset],
    cfg: &TrainConfig,
) -> Result<(MetaLearner, PerformanceMatrix, TrainReport)> {
    check_corpus_size(corpus.len(), cfg.k)?;
    let models = enumerate_model_set();
    let p = build_performance_matrix(corpus, &models, cfg.n_trials, cfg.seed)?;
    let features = extract_corpus(corpus, cfg.seed)?;
    let (learner, report) = train_from_parts(&metafeatures::stack(&features), &p, &models, cfg)?;
    Ok((learner, p, report))
}

fn check_corpus_size(n: usize, k: usize) -> Result<()> {
    if n < k + 2 {
        return Err(Error::CorpusTooSmall {
            got: n,
            needed: k + 2,
        });
    }
    Ok(())
}

/// Trains from precomputed meta-features (n × d) and performance matrix.
pub fn train_from_parts(
    meta: &DMatrix<f64>,
    p: &PerformanceMatrix,
    models: &[ModelSpec],
    cfg: &TrainConfig,
) -> Result<(MetaLearner, TrainReport)> {
    let start = Instant::now();
    let n = p.n_datasets();
    check_corpus_size(n, cfg.k)?;
    if meta.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: meta.nrows(),
        });
    }
    if models.len() != p.n_models() {
        return Err(Error::LengthMismatch {
            expected: p.n_models(),
            got: models.len(),
        });
    }
    let phi = EmbeddingModel::fit(meta, cfg.k)?;
    let u0 = phi.embed_rows(meta)?;
    let fit = rankmf::fit(&p.values, &u0, &cfg.optimizer)?;
    let forest = TreeEnsembleRegressor::fit(&u0, &fit.factors.u, &cfg.forest)?;

    let regret = |pick: &dyn Fn(usize) -> usize| -> f64 {
        (0..n)
            .map(|i| {
                let row = p.row(i);
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                best - row[pick(i)]
            })
            .sum::<f64>()
            / n as f64
    };
    let training_regret = regret(&|i| argmax(&fit.factors.predict_row(i)));
    let gb = crate::baselines::gb_select(&p.values);
    let global_best_regret = regret(&|_| gb);

    let learner = MetaLearner {
        k: phi.k,
        manifest_hash: metafeatures::manifest_hash(),
        phi,
        forest,
        v: fit.factors.v,
        model_list: models.to_vec(),
        metadata: TrainingMetadata {
            n_datasets: n,
            dataset_ids: p.dataset_ids.clone(),
            config: cfg.clone(),
        },
    };
    let report = TrainReport {
        loss_curve: fit.loss_curve,
        best_epoch: fit.best_epoch,
        k_requested: cfg.k,
        k_used: learner.k,
        training_regret,
        global_best_regret,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((learner, report))
}

impl MetaLearner {
    /// Predicted performance of every model for a meta-feature vector.
    pub fn predict_from_features(&self, features: &MetaFeatureVector) -> Result<Vec<f64>> {
        let z = self.phi.embed(features.as_slice())?;
        let u = DVector::from_vec(self.forest.predict(&z)?);
        Ok(rankmf::predict(&u, &self.v))
    }

    pub fn select_from_features(&self, features: &MetaFeatureVector) -> Result<Selection> {
        let predicted = self.predict_from_features(features)?;
        Ok(Selection {
            chosen: self.model_list[argmax(&predicted)],
            predicted,
        })
    }
}

/// Picks a model for `data` without fitting any candidate. Labels, if
/// present, are not read.
pub fn select_model(learner: &MetaLearner, data: &Dataset, seed: u64) -> Result<Selection> {
    let features = metafeatures::extract(data, seed)?;
    learner.select_from_features(&features)
}
