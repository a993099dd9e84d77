//! Comparison selectors. Each fits on training meta-features `M` (n × d) and
//! a performance matrix `P` (n × m) and returns a model index for a new
//! meta-feature vector.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::detectors::{enumerate_model_set, ModelSpec, PreparedData, ScoreVector};
use crate::error::{Error, Result};
use crate::metalearner::{train_from_parts, MetaLearner, TrainConfig};
use crate::rankmf::PerformanceMatrix;
use crate::regressor::{ForestConfig, RandomForest, TreeEnsembleRegressor};
use crate::seed;
use crate::stats::argmax;

const TAG_KMEANS: u64 = 0x6b6d_6e73;
const TAG_ALS: u64 = 0x616c_7300;
const TAG_RS: u64 = 0x7273_0000;
const KMEANS_RESTARTS: usize = 10;
const KMEANS_ITERS: usize = 100;
const ALS_ITERS: usize = 200;
const ALS_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaselineKind {
    Gb,
    Isac,
    As,
    Ss,
    Alors,
    MetaodC,
    MetaodF,
    Me,
    Rs,
    Eub,
    Fixed(ModelSpec),
}

impl BaselineKind {
    /// Whether the method needs the sibling structure of the testbed.
    pub fn needs_siblings(&self) -> bool {
        matches!(self, BaselineKind::Eub)
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselineKind::Gb => f.write_str("GB"),
            BaselineKind::Isac => f.write_str("ISAC"),
            BaselineKind::As => f.write_str("AS"),
            BaselineKind::Ss => f.write_str("SS"),
            BaselineKind::Alors => f.write_str("ALORS"),
            BaselineKind::MetaodC => f.write_str("METAOD_C"),
            BaselineKind::MetaodF => f.write_str("METAOD_F"),
            BaselineKind::Me => f.write_str("ME"),
            BaselineKind::Rs => f.write_str("RS"),
            BaselineKind::Eub => f.write_str("EUB"),
            BaselineKind::Fixed(spec) => write!(f, "FIXED({spec})"),
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    /// Accepts the display names; `FIXED(...)` takes a model id or grid index.
    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        Ok(match upper.as_str() {
            "GB" => BaselineKind::Gb,
            "ISAC" => BaselineKind::Isac,
            "AS" => BaselineKind::As,
            "SS" => BaselineKind::Ss,
            "ALORS" => BaselineKind::Alors,
            "METAOD_C" => BaselineKind::MetaodC,
            "METAOD_F" => BaselineKind::MetaodF,
            "ME" => BaselineKind::Me,
            "RS" => BaselineKind::Rs,
            "EUB" => BaselineKind::Eub,
            _ => {
                let inner = s
                    .trim()
                    .strip_prefix("FIXED(")
                    .or_else(|| s.trim().strip_prefix("fixed("))
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::UnknownMethod(s.to_owned()))?;
                let grid = enumerate_model_set();
                let spec = match inner.parse::<usize>() {
                    Ok(i) => grid.get(i).copied(),
                    Err(_) => grid.iter().find(|m| m.id() == inner).copied(),
                };
                BaselineKind::Fixed(spec.ok_or_else(|| Error::UnknownMethod(s.to_owned()))?)
            }
        })
    }
}

/// Column means; ties go to the smaller index.
pub fn gb_select(p_train: &DMatrix<f64>) -> usize {
    let means: Vec<f64> = p_train.column_iter().map(|c| c.mean()).collect();
    argmax(&means)
}

/// Column standardization with mean imputation of non-finite entries;
/// zero-variance columns keep scale 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() as f64;
        let mut means = Vec::with_capacity(m.ncols());
        let mut stds = Vec::with_capacity(m.ncols());
        for col in m.column_iter() {
            let finite: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
            let mean = if finite.is_empty() {
                0.0
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means.push(mean);
            stds.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { means, stds }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                if v.is_finite() {
                    (v - self.means[j]) / self.stds[j]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for i in 0..m.nrows() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            for (j, v) in self.transform_row(&row).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn nearest(points: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = sq_dist(p, x);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Clusters of the standardized training meta-features, each holding the
/// model with the best mean performance inside it.
#[derive(Debug, Clone)]
pub struct IsacModel {
    scaler: Standardizer,
    centroids: Vec<Vec<f64>>,
    best_model: Vec<usize>,
}

impl IsacModel {
    pub fn fit(
        m_train: &DMatrix<f64>,
        p_train: &DMatrix<f64>,
        n_clusters: usize,
        seed: u64,
    ) -> Self {
        let scaler = Standardizer::fit(m_train);
        let points = rows_of(&scaler.transform(m_train));
        let c = n_clusters.clamp(1, points.len());
        let (centroids, assignment) = kmeans(&points, c, seed);
        let best_model = (0..centroids.len())
            .map(|cl| {
                let members: Vec<usize> =
                    (0..points.len()).filter(|&i| assignment[i] == cl).collect();
                gb_select(&p_train.select_rows(&members))
            })
            .collect();
        Self {
            scaler,
            centroids,
            best_model,
        }
    }

    pub fn select(&self, m_test: &[f64]) -> usize {
        let x = self.scaler.transform_row(m_test);
        self.best_model[nearest(&self.centroids, &x)]
    }
}

/// Default cluster count, `ceil(sqrt(n))`.
pub fn isac_default_clusters(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

pub fn isac_select(
    m_train: &DMatrix<f64>,
    p_train: &DMatrix<f64>,
    m_test: &[f64],
    n_clusters: usize,
    seed: u64,
) -> usize {
    IsacModel::fit(m_train, p_train, n_clusters, seed).select(m_test)
}

/// k-means++ seeding and Lloyd iterations, best of several restarts by
/// inertia. Empty clusters are dropped.
fn kmeans(points: &[Vec<f64>], c: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = seed::rng(&[seed, TAG_KMEANS, restart as u64]);
        let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
        while centroids.len() < c {
            let d2: Vec<f64> = points
                .iter()
                .map(|p| sq_dist(p, &centroids[nearest(&centroids, p)]))
                .collect();
            let total: f64 = d2.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut r = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            centroids.push(points[pick].clone());
        }
        let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        for _ in 0..KMEANS_ITERS {
            let dim = points[0].len();
            let mut sums = vec![vec![0.0; dim]; centroids.len()];
            let mut counts = vec![0usize; centroids.len()];
            for (p, &a) in points.iter().zip(&assignment) {
                counts[a] += 1;
                for (s, v) in sums[a].iter_mut().zip(p) {
                    *s += v;
                }
            }
            let mut next = Vec::new();
            for (s, &cnt) in sums.into_iter().zip(&counts) {
                if cnt > 0 {
                    next.push(s.into_iter().map(|v| v / cnt as f64).collect::<Vec<_>>());
                }
            }
            centroids = next;
            let updated: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
            if updated == assignment {
                break;
            }
            assignment = updated;
        }
        let inertia: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        if best.as_ref().is_none_or(|(b, _, _)| inertia < *b) {
            best = Some((inertia, centroids, assignment));
        }
    }
    let (_, centroids, assignment) = best.expect("at least one restart");
    (centroids, assignment)
}

/// Nearest training dataset in standardized meta-feature space.
#[derive(Debug, Clone)]
pub struct AsModel {
    scaler: Standardizer,
    points: Vec<Vec<f64>>,
    best_model: Vec<usize>,
}

impl AsModel {
    pub fn fit(m_train: &DMatrix<f64>, p_train: &DMatrix<f64>) -> Self {
        let scaler = Standardizer::fit(m_train);
        let points = rows_of(&scaler.transform(m_train));
        let best_model = p_train
            .row_iter()
            .map(|r| argmax(&r.iter().copied().collect::<Vec<_>>()))
            .collect();
        Self {
            scaler,
            points,
            best_model,
        }
    }

    pub fn select(&self, m_test: &[f64]) -> usize {
        self.best_model[nearest(&self.points, &self.scaler.transform_row(m_test))]
    }
}

pub fn as_select(m_train: &DMatrix<f64>, p_train: &DMatrix<f64>, m_test: &[f64]) -> usize {
    AsModel::fit(m_train, p_train).select(m_test)
}

/// One forest per model column, regressing performance on standardized
/// meta-features.
#[derive(Debug, Clone)]
pub struct SsModel {
    scaler: Standardizer,
    forests: Vec<RandomForest>,
}

impl SsModel {
    pub fn fit(m_train: &DMatrix<f64>, p_train: &DMatrix<f64>, cfg: &ForestConfig) -> Result<Self> {
        let scaler = Standardizer::fit(m_train);
        let x = scaler.transform(m_train);
        let forests = (0..p_train.ncols())
            .into_par_iter()
            .map(|j| {
                let y: Vec<f64> = p_train.column(j).iter().copied().collect();
                RandomForest::fit(&x, &y, cfg, j as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scaler, forests })
    }

    pub fn predict(&self, m_test: &[f64]) -> Vec<f64> {
        let x = self.scaler.transform_row(m_test);
        self.forests.iter().map(|f| f.predict(&x)).collect()
    }

    pub fn select(&self, m_test: &[f64]) -> usize {
        argmax(&self.predict(m_test))
    }
}

pub fn ss_select(
    m_train: &DMatrix<f64>,
    p_train: &DMatrix<f64>,
    m_test: &[f64],
    seed: u64,
) -> Result<usize> {
    let cfg = ForestConfig {
        seed,
        ..Default::default()
    };
    Ok(SsModel::fit(m_train, p_train, &cfg)?.select(m_test))
}

/// Ridge-regularized alternating least squares, `P ≈ U Vᵀ`.
pub fn als(p: &DMatrix<f64>, k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = p.shape();
    let mut rng = seed::rng(&[seed, TAG_ALS]);
    let mut v = DMatrix::from_fn(m, k, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.1 * z
    });
    let mut u = DMatrix::zeros(n, k);
    let ridge = DMatrix::<f64>::identity(k, k) * ALS_RIDGE;
    let solve = |a: DMatrix<f64>, rhs: DMatrix<f64>| -> DMatrix<f64> {
        // Solves X a = rhs for X; a is symmetric positive definite.
        let chol = a
            .cholesky()
            .expect("ridge keeps the normal equations definite");
        chol.solve(&rhs.transpose()).transpose()
    };
    let mut last = f64::INFINITY;
    for _ in 0..ALS_ITERS {
        u = solve(v.transpose() * &v + &ridge, p * &v);
        v = solve(u.transpose() * &u + &ridge, p.transpose() * &u);
        let err = (p - &u * v.transpose()).norm_squared();
        if (last - err).abs() <= 1e-12 * last.max(1e-300) {
            break;
        }
        last = err;
    }
    (u, v)
}

/// Squared-loss factorization with a forest from standardized meta-features
/// to the dataset factors.
#[derive(Debug, Clone)]
pub struct AlorsModel {
    scaler: Standardizer,
    forest: TreeEnsembleRegressor,
    v: DMatrix<f64>,
}

impl AlorsModel {
    pub fn fit(
        m_train: &DMatrix<f64>,
        p_train: &DMatrix<f64>,
        k: usize,
        cfg: &ForestConfig,
    ) -> Result<Self> {
        let k = k.clamp(1, p_train.nrows().min(p_train.ncols()));
        let (u, v) = als(p_train, k, cfg.seed);
        let scaler = Standardizer::fit(m_train);
        let forest = TreeEnsembleRegressor::fit(&scaler.transform(m_train), &u, cfg)?;
        Ok(Self { scaler, forest, v })
    }

    pub fn predict(&self, m_test: &[f64]) -> Result<Vec<f64>> {
        let u = DVector::from_vec(self.forest.predict(&self.scaler.transform_row(m_test))?);
        Ok((&self.v * u).iter().copied().collect())
    }

    pub fn select(&self, m_test: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict(m_test)?))
    }
}

pub fn alors_select(
    m_train: &DMatrix<f64>,
    p_train: &DMatrix<f64>,
    m_test: &[f64],
    k: usize,
    seed: u64,
) -> Result<usize> {
    let cfg = ForestConfig {
        seed,
        ..Default::default()
    };
    AlorsModel::fit(m_train, p_train, k, &cfg)?.select(m_test)
}

/// Truncated SVD of the column-standardized concatenation `[P, M]`. A test
/// row `[0, m]` is projected onto the leading right singular vectors and the
/// performance block of its reconstruction, mapped back to the original
/// performance scale, is ranked.
#[derive(Debug, Clone)]
pub struct MetaodCModel {
    n_models: usize,
    scaler: Standardizer,
    /// (m + d) × k.
    axes: DMatrix<f64>,
}

impl MetaodCModel {
    pub fn fit(m_train: &DMatrix<f64>, p_train: &DMatrix<f64>, k: usize) -> Self {
        let n = p_train.nrows();
        let n_models = p_train.ncols();
        let d = m_train.ncols();
        let c = DMatrix::from_fn(n, n_models + d, |i, j| {
            if j < n_models {
                p_train[(i, j)]
            } else {
                m_train[(i, j - n_models)]
            }
        });
        let scaler = Standardizer::fit(&c);
        let z = scaler.transform(&c);
        let svd = z.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let k = k.clamp(1, order.len());
        let axes = DMatrix::from_fn(n_models + d, k, |r, col| v_t[(order[col], r)]);
        Self {
            n_models,
            scaler,
            axes,
        }
    }

    /// Reconstructed performance of every model.
    pub fn predict(&self, m_test: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.n_models];
        let std_meta = self.meta_block(m_test);
        row.extend(std_meta);
        let x = DVector::from_vec(row);
        let coords = self.axes.transpose() * &x;
        let recon = &self.axes * coords;
        (0..self.n_models)
            .map(|j| recon[j] * self.scaler.stds[j] + self.scaler.means[j])
            .collect()
    }

    fn meta_block(&self, m_test: &[f64]) -> Vec<f64> {
        m_test
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let c = self.n_models + j;
                if v.is_finite() {
                    (v - self.scaler.means[c]) / self.scaler.stds[c]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn select(&self, m_test: &[f64]) -> usize {
        argmax(&self.predict(m_test))
    }
}

pub fn metaod_c_select(
    m_train: &DMatrix<f64>,
    p_train: &DMatrix<f64>,
    m_test: &[f64],
    k: usize,
) -> usize {
    MetaodCModel::fit(m_train, p_train, k).select(m_test)
}

/// The training configuration with dataset factors frozen at their
/// meta-feature embedding, so only the model factors are optimized.
pub fn metaod_f_config(cfg: &TrainConfig) -> TrainConfig {
    let mut out = cfg.clone();
    out.optimizer.update_u = false;
    out
}

/// Trains the frozen-factor variant; its online path is the regular one.
pub fn train_metaod_f(
    meta: &DMatrix<f64>,
    p: &PerformanceMatrix,
    models: &[ModelSpec],
    cfg: &TrainConfig,
) -> Result<MetaLearner> {
    Ok(train_from_parts(meta, p, models, &metaod_f_config(cfg))?.0)
}

/// Element-wise mean of the z-normalized scores of every model (constant
/// score vectors contribute zeros). Models that cannot run on the dataset
/// are skipped.
pub fn me_score(models: &[ModelSpec], data: &Dataset, seed: u64) -> Result<ScoreVector> {
    let prepared = PreparedData::new(data);
    let n = data.n_samples();
    let vectors: Vec<Vec<f64>> = models
        .par_iter()
        .filter_map(|spec| match prepared.score(&spec.detector, seed) {
            Ok(s) => Some(Ok(zscore(s.as_slice()))),
            Err(Error::InvalidHyperparameter(_)) => None,
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<_>>()?;
    if vectors.is_empty() {
        return Err(Error::InvalidConfig(
            "no model in the set can score this dataset".into(),
        ));
    }
    let mut out = vec![0.0; n];
    for v in &vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    for o in &mut out {
        *o /= vectors.len() as f64;
    }
    Ok(ScoreVector(out))
}

fn zscore(s: &[f64]) -> Vec<f64> {
    let mu = crate::stats::mean(s);
    let sd = crate::stats::std_dev(s);
    if sd > 0.0 && sd.is_finite() {
        s.iter().map(|v| (v - mu) / sd).collect()
    } else {
        vec![0.0; s.len()]
    }
}

/// Uniform draw from `[0, m)`.
pub fn rs_select(m: usize, seed: u64) -> usize {
    seed::rng(&[seed, TAG_RS]).random_range(0..m)
}

/// Performance on dataset `i` of the model with the best mean performance
/// over `siblings` (which must not include `i`).
pub fn eub_value(p: &DMatrix<f64>, i: usize, siblings: &[usize]) -> Result<f64> {
    let siblings: Vec<usize> = siblings.iter().copied().filter(|&s| s != i).collect();
    if siblings.is_empty() {
        return Err(Error::NoSiblings(i));
    }
    Ok(p[(i, gb_select(&p.select_rows(&siblings)))])
}
