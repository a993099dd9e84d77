//! The inductive chain from meta-features to dataset factors: a standardized
//! principal-component embedding followed by per-output random forests.

mod embedding;
mod forest;

pub use embedding::EmbeddingModel;
pub use forest::{ForestConfig, RandomForest, RegressionTree, TreeEnsembleRegressor, TreeNode};

use nalgebra::DMatrix;

use crate::error::Result;

pub fn fit_embedding(m: &DMatrix<f64>, k: usize) -> Result<EmbeddingModel> {
    EmbeddingModel::fit(m, k)
}

pub fn embed(model: &EmbeddingModel, m_vec: &[f64]) -> Result<Vec<f64>> {
    model.embed(m_vec)
}

pub fn fit_regressor(
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    cfg: &ForestConfig,
) -> Result<TreeEnsembleRegressor> {
    TreeEnsembleRegressor::fit(z, u, cfg)
}

pub fn predict_latent(f: &TreeEnsembleRegressor, z: &[f64]) -> Result<Vec<f64>> {
    f.predict(z)
}
