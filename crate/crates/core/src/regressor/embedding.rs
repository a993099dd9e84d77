use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spread at or below `max(FLAT_ABS, FLAT_REL * |mean|)` is rounding noise.
const FLAT_ABS: f64 = 1e-12;
const FLAT_REL: f64 = 1e-9;

/// Column standardization followed by projection on the leading principal
/// axes. Non-finite inputs are imputed with the stored column mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub means: Vec<f64>,
    /// Column scales; zero-variance columns carry 1 and get zero loadings.
    pub stds: Vec<f64>,
    /// d × k, orthonormal columns.
    #[serde(with = "crate::serde_rows")]
    pub components: DMatrix<f64>,
    pub k: usize,
}

impl EmbeddingModel {
    /// Fits on an n × d matrix. When the standardized data has fewer than `k`
    /// non-negligible singular values, `k` is reduced to that rank.
    pub fn fit(m: &DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, d) = m.shape();
        if k == 0 || n <= k {
            return Err(Error::InvalidConfig(format!(
                "embedding needs 0 < k < n, got k = {k} with n = {n}"
            )));
        }
        let mut means = Vec::with_capacity(d);
        let mut stds = Vec::with_capacity(d);
        let mut flat = vec![false; d];
        for j in 0..d {
            let finite: Vec<f64> = m
                .column(j)
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .collect();
            let mean = if finite.is_empty() {
                0.0
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let var = m
                .column(j)
                .iter()
                .map(|&v| {
                    if v.is_finite() {
                        (v - mean).powi(2)
                    } else {
                        0.0
                    }
                })
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            flat[j] = !(sd.is_finite() && sd > FLAT_ABS.max(FLAT_REL * mean.abs()));
            stds.push(if flat[j] { 1.0 } else { sd });
        }
        let mut model = Self {
            means,
            stds,
            components: DMatrix::zeros(d, 0),
            k: 0,
        };
        let z = DMatrix::from_fn(n, d, |i, j| model.standardize(j, m[(i, j)]));
        let svd = z.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let tol = top * n.max(d) as f64 * f64::EPSILON;
        let rank = order
            .iter()
            .filter(|&&i| svd.singular_values[i] > tol)
            .count();
        let kept = if rank < k {
            log::warn!("meta-feature matrix has rank {rank} < k = {k}; embedding with k = {rank}");
            rank.max(1)
        } else {
            k
        };
        let mut components = DMatrix::zeros(d, kept);
        for (c, &i) in order.iter().take(kept).enumerate() {
            let mut axis: Vec<f64> = v_t
                .row(i)
                .iter()
                .zip(&flat)
                .map(|(&v, &f)| if f { 0.0 } else { v })
                .collect();
            // Sign convention: the loading of largest magnitude is positive.
            let lead =
                axis.iter().enumerate().fold(
                    0,
                    |best, (j, v)| if v.abs() > axis[best].abs() { j } else { best },
                );
            if axis[lead] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            for (r, v) in axis.into_iter().enumerate() {
                components[(r, c)] = v;
            }
        }
        model.components = components;
        model.k = kept;
        Ok(model)
    }

    fn standardize(&self, j: usize, v: f64) -> f64 {
        if v.is_finite() {
            (v - self.means[j]) / self.stds[j]
        } else {
            0.0
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn embed(&self, m_vec: &[f64]) -> Result<Vec<f64>> {
        if m_vec.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: m_vec.len(),
            });
        }
        let z: Vec<f64> = m_vec
            .iter()
            .enumerate()
            .map(|(j, &v)| self.standardize(j, v))
            .collect();
        Ok((0..self.k)
            .map(|c| {
                z.iter()
                    .enumerate()
                    .map(|(j, v)| v * self.components[(j, c)])
                    .sum()
            })
            .collect())
    }

    /// Embeds every row of an n × d matrix.
    pub fn embed_rows(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(m.nrows(), self.k);
        for i in 0..m.nrows() {
            let row: Vec<f64> = m.row(i).iter().copied().collect();
            for (c, v) in self.embed(&row)?.into_iter().enumerate() {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> DMatrix<f64> {
        DMatrix::from_fn(12, 5, |i, j| {
            ((i * 31 + j * 17) % 11) as f64 + 0.1 * (i * j) as f64
        })
    }

    #[test]
    fn axes_are_orthonormal() {
        let model = EmbeddingModel::fit(&corpus(), 3).unwrap();
        let gram = model.components.transpose() * &model.components;
        assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-8);
    }

    #[test]
    fn collinear_points_keep_distances() {
        let m = DMatrix::from_fn(6, 2, |i, j| {
            if j == 0 {
                i as f64
            } else {
                3.0 * i as f64 - 1.0
            }
        });
        let model = EmbeddingModel::fit(&m, 1).unwrap();
        let z = model.embed_rows(&m).unwrap();
        // Standardized columns are equal, so a point moves sqrt(2) units per step.
        let sd = (35.0f64 / 12.0).sqrt();
        for i in 0..6 {
            for l in 0..6 {
                let expected = 2f64.sqrt() * (i as f64 - l as f64).abs() / sd;
                assert!(((z[(i, 0)] - z[(l, 0)]).abs() - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn nan_column_contributes_nothing() {
        let mut m = corpus();
        m.column_mut(2).fill(f64::NAN);
        let model = EmbeddingModel::fit(&m, 2).unwrap();
        assert!(model.means[2] == 0.0 && model.stds[2] == 1.0);
        let row: Vec<f64> = m.row(4).iter().copied().collect();
        let mut changed = row.clone();
        changed[2] = 123.0;
        let a = model.embed(&row).unwrap();
        let b = model.embed(&changed).unwrap();
        let weight: Vec<f64> = (0..2).map(|c| model.components[(2, c)]).collect();
        for c in 0..2 {
            assert!((b[c] - a[c] - 123.0 * weight[c]).abs() < 1e-9);
        }
        assert!(weight.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn mean_vector_maps_to_origin() {
        let m = corpus();
        let model = EmbeddingModel::fit(&m, 3).unwrap();
        let z = model.embed(&model.means).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let mut with_nan = model.means.clone();
        with_nan[1] = f64::NAN;
        assert_eq!(model.embed(&with_nan).unwrap(), z);
    }

    #[test]
    fn rounding_noise_counts_as_zero_variance() {
        let mut m = corpus();
        for i in 0..m.nrows() {
            m[(i, 3)] = 0.3 + if i % 2 == 0 { 0.0 } else { 5.551e-17 };
        }
        let model = EmbeddingModel::fit(&m, 2).unwrap();
        assert_eq!(model.stds[3], 1.0);
        assert!((0..2).all(|c| model.components[(3, c)] == 0.0));
        let row: Vec<f64> = m.row(0).iter().copied().collect();
        let mut moved = row.clone();
        moved[3] = 0.6;
        assert_eq!(model.embed(&row).unwrap(), model.embed(&moved).unwrap());
    }

    #[test]
    fn rank_deficiency_shrinks_k() {
        let m = DMatrix::from_fn(8, 4, |i, j| (i as f64) * (j as f64 + 1.0));
        let model = EmbeddingModel::fit(&m, 3).unwrap();
        assert_eq!(model.k, 1);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let model = EmbeddingModel::fit(&corpus(), 2).unwrap();
        assert!(matches!(
            model.embed(&[1.0, 2.0]),
            Err(Error::LengthMismatch {
                expected: 5,
                got: 2
            })
        ));
    }
}
