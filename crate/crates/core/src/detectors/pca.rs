use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{Error, Result};

const EXPLAINED_TARGET: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct PcaModel {
    pub scores: Vec<f64>,
    /// Explained-variance ratios, descending.
    pub explained_ratio: Vec<f64>,
    /// Singular values of the standardized data matrix, descending.
    pub singular_values: Vec<f64>,
    pub n_components: usize,
}

/// Standardizes the non-constant columns, keeps the fewest principal
/// components explaining at least 90% of the variance and scores each row by
/// its squared reconstruction error.
pub fn pca_reconstruction(data: &Dataset) -> Result<PcaModel> {
    let n = data.n_samples();
    let x = data.x();
    let mut cols = Vec::new();
    for j in 0..data.n_features() {
        let c = x.column(j);
        let mean = c.mean();
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            cols.push((j, mean, var.sqrt()));
        }
    }
    if cols.is_empty() {
        return Err(Error::DegenerateDataset(format!(
            "{}: every column has zero variance",
            data.name()
        )));
    }
    let q = cols.len();
    let z = DMatrix::from_fn(n, q, |i, c| {
        let (j, mean, sd) = cols[c];
        (x[(i, j)] - mean) / sd
    });
    let cov = z.transpose() * &z / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let explained_ratio: Vec<f64> = values.iter().map(|v| v / total).collect();
    let mut kept = 0;
    let mut cum = 0.0;
    while kept < q {
        cum += explained_ratio[kept];
        kept += 1;
        if cum >= EXPLAINED_TARGET - 1e-12 {
            break;
        }
    }
    let basis = DMatrix::from_fn(q, kept, |r, c| eig.eigenvectors[(r, order[c])]);
    let proj = &z * &basis;
    // A full basis reconstructs every row exactly.
    let scores = if kept == q {
        vec![0.0; n]
    } else {
        (0..n)
            .map(|i| {
                let total: f64 = z.row(i).iter().map(|v| v * v).sum();
                let captured: f64 = proj.row(i).iter().map(|v| v * v).sum();
                (total - captured).max(0.0)
            })
            .collect()
    };
    Ok(PcaModel {
        scores,
        explained_ratio,
        singular_values: values.iter().map(|v| (v * n as f64).sqrt()).collect(),
        n_components: kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn off_plane_point_has_largest_error() {
        // Points on the line y = x plus one point far off it.
        let mut rows: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![i as f64, i as f64 + 0.01 * (i % 3) as f64])
            .collect();
        rows.push(vec![5.0, 25.0]);
        let d = Dataset::from_rows("p", &rows, None).unwrap();
        let m = pca_reconstruction(&d).unwrap();
        assert_eq!(m.n_components, 1);
        assert_eq!(crate::stats::argmax(&m.scores), 30);
        assert!((m.explained_ratio.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 4];
        let d = Dataset::from_rows("c", &rows, None).unwrap();
        assert!(matches!(
            pca_reconstruction(&d),
            Err(Error::DegenerateDataset(_))
        ));
    }
}
