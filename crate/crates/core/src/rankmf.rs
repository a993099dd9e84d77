//! Rank-based matrix factorization of the performance matrix.
//!
//! Each dataset row is scored by discounted cumulative gain over the models
//! as ranked by predicted performance `P̂_ij = <U_i, V_j>`. The rank indicator
//! is replaced by a logistic sigmoid with steepness `alpha`, giving the
//! smoothed objective
//!
//! ```text
//! sDCG_i = Σ_j (b^P_ij - 1) / log2(β_ij),   β_ij = c + Σ_{k≠j} σ(α (P̂_ik - P̂_ij))
//! ```
//!
//! where `c = 2` counts the model itself exactly (so sDCG tends to the exact
//! DCG as `alpha` grows) or `c = 3/2` when the self-comparison is also passed
//! through the sigmoid ([`SelfRank::Sigmoid`]).
//!
//! which is maximized by alternating stochastic gradient steps on `U_i` and
//! the rows of `V`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const TAG_V_INIT: u64 = 0x7669_6e69;
const TAG_SHUFFLE: u64 = 0x7368_7566;

/// Datasets × models matrix of measured performance (average precision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMatrix {
    pub values: DMatrix<f64>,
    pub dataset_ids: Vec<String>,
    pub model_ids: Vec<String>,
}

impl PerformanceMatrix {
    pub fn new(
        values: DMatrix<f64>,
        dataset_ids: Vec<String>,
        model_ids: Vec<String>,
    ) -> Result<Self> {
        if values.nrows() != dataset_ids.len() || values.ncols() != model_ids.len() {
            return Err(Error::LengthMismatch {
                expected: values.nrows() * values.ncols(),
                got: dataset_ids.len() * model_ids.len(),
            });
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidConfig(
                "performance entries must be finite and lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            values,
            dataset_ids,
            model_ids,
        })
    }

    pub fn n_datasets(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_models(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Sub-matrix of the given dataset rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(rows),
            dataset_ids: rows.iter().map(|&r| self.dataset_ids[r].clone()).collect(),
            model_ids: self.model_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactors {
    /// n × k dataset factors.
    pub u: DMatrix<f64>,
    /// m × k model factors.
    pub v: DMatrix<f64>,
}

impl LatentFactors {
    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    pub fn predict_row(&self, i: usize) -> Vec<f64> {
        (&self.v * self.u.row(i).transpose())
            .iter()
            .copied()
            .collect()
    }
}

/// Which expression drives the `V` updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VGradient {
    /// The exact partial derivative, including the terms through every other
    /// model's smoothed rank.
    #[default]
    Complete,
    /// Only the term through model j's own smoothed rank.
    SelfTermOnly,
}

/// How the comparison of a model with itself enters the smoothed rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelfRank {
    /// Counted as 1, like the indicator it replaces: `c = 2`.
    #[default]
    Indicator,
    /// Counted as `σ(0) = 1/2`: `c = 3/2`.
    Sigmoid,
}

impl SelfRank {
    fn offset(self) -> f64 {
        match self {
            SelfRank::Indicator => 2.0,
            SelfRank::Sigmoid => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// DCG gain base, > 1.
    pub b: f64,
    /// Sigmoid steepness, > 0.
    pub alpha: f64,
    pub lr_base: f64,
    pub lr_max: f64,
    /// Epochs per triangular learning-rate cycle.
    pub cycle_len: usize,
    pub max_epochs: usize,
    /// Relative change in total loss below which training stops.
    pub tol: f64,
    pub seed: u64,
    /// When false, `U` stays at its initial value and only `V` is trained.
    pub update_u: bool,
    pub v_gradient: VGradient,
    #[serde(default)]
    pub self_rank: SelfRank,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            b: 2.0,
            alpha: 1.0,
            lr_base: 0.01,
            lr_max: 0.1,
            cycle_len: 10,
            max_epochs: 50,
            tol: 1e-4,
            seed: 0,
            update_u: true,
            v_gradient: VGradient::Complete,
            self_rank: SelfRank::Indicator,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.b > 1.0
            && self.alpha > 0.0
            && self.lr_base > 0.0
            && self.lr_max >= self.lr_base
            && self.cycle_len > 0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "invalid optimizer config {self:?}"
            )))
        }
    }

    /// Triangular cyclical rate: `lr_base` at the start of every cycle,
    /// `lr_max` at its midpoint.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let phase = (epoch % self.cycle_len) as f64 / self.cycle_len as f64;
        let tri = 1.0 - (2.0 * phase - 1.0).abs();
        self.lr_base + (self.lr_max - self.lr_base) * tri
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gain(p: f64, b: f64) -> f64 {
    b.powf(p) - 1.0
}

/// DCG of the ranking induced by `p_hat`; ties go to the smaller model index.
pub fn dcg_exact(p_row: &[f64], p_hat_row: &[f64], b: f64) -> f64 {
    let m = p_row.len();
    (0..m)
        .map(|j| {
            let ahead = (0..m)
                .filter(|&k| p_hat_row[k] > p_hat_row[j] || (p_hat_row[k] == p_hat_row[j] && k < j))
                .count();
            let rank = 1 + ahead;
            gain(p_row[j], b) / (1.0 + rank as f64).log2()
        })
        .sum()
}

/// Smoothed DCG with the self-comparison counted exactly.
pub fn sdcg(p_row: &[f64], p_hat_row: &[f64], b: f64, alpha: f64) -> f64 {
    sdcg_with(p_row, p_hat_row, b, alpha, SelfRank::Indicator)
}

/// Smoothed DCG. Rows with a single model use the exact DCG.
pub fn sdcg_with(p_row: &[f64], p_hat_row: &[f64], b: f64, alpha: f64, self_rank: SelfRank) -> f64 {
    let m = p_row.len();
    if m == 1 {
        return dcg_exact(p_row, p_hat_row, b);
    }
    (0..m)
        .map(|j| {
            let beta = self_rank.offset()
                + (0..m)
                    .filter(|&k| k != j)
                    .map(|k| sigmoid(alpha * (p_hat_row[k] - p_hat_row[j])))
                    .sum::<f64>();
            gain(p_row[j], b) / beta.log2()
        })
        .sum()
}

/// Partial derivatives of `-sDCG` with respect to each predicted performance
/// `P̂_j` of one row. Since `P̂_j = <U_i, V_j>`, the row gradients follow as
/// `∂L/∂U_i = Σ_j coef_j V_j` and `∂L/∂V_j = coef_j U_i`.
pub fn loss_gradient_wrt_predictions(
    p_row: &[f64],
    p_hat_row: &[f64],
    b: f64,
    alpha: f64,
    self_rank: SelfRank,
    mode: VGradient,
) -> Vec<f64> {
    let m = p_row.len();
    if m == 1 {
        return vec![0.0];
    }
    // s'[j][k] = σ(w)(1 - σ(w)) is symmetric in (j, k).
    let mut deriv = vec![0.0; m * m];
    let mut beta = vec![self_rank.offset(); m];
    for j in 0..m {
        for k in (j + 1)..m {
            let s = sigmoid(alpha * (p_hat_row[k] - p_hat_row[j]));
            beta[j] += s;
            beta[k] += 1.0 - s;
            let d = s * (1.0 - s);
            deriv[j * m + k] = d;
            deriv[k * m + j] = d;
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let g: Vec<f64> = (0..m)
        .map(|j| {
            let lb = beta[j].ln();
            ln2 * gain(p_row[j], b) / (beta[j] * lb * lb)
        })
        .collect();
    (0..m)
        .map(|j| {
            let row = &deriv[j * m..(j + 1) * m];
            let own: f64 = row.iter().sum::<f64>();
            let self_term = -g[j] * own;
            match mode {
                VGradient::SelfTermOnly => alpha * self_term,
                VGradient::Complete => {
                    let cross: f64 = row.iter().zip(&g).map(|(d, gl)| d * gl).sum();
                    alpha * (self_term + cross)
                }
            }
        })
        .collect()
}

fn predictions(u_i: &[f64], v: &DMatrix<f64>) -> Vec<f64> {
    (0..v.nrows())
        .map(|j| (0..v.ncols()).map(|c| v[(j, c)] * u_i[c]).sum())
        .collect()
}

fn row_of(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// `∂(-sDCG_i)/∂U_i`.
pub fn grad_u(
    i: usize,
    p: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    cfg: &OptimizerConfig,
) -> Vec<f64> {
    let u_i = row_of(u, i);
    let p_hat = predictions(&u_i, v);
    let coef = loss_gradient_wrt_predictions(
        &row_of(p, i),
        &p_hat,
        cfg.b,
        cfg.alpha,
        cfg.self_rank,
        VGradient::Complete,
    );
    (0..v.ncols())
        .map(|c| (0..v.nrows()).map(|j| coef[j] * v[(j, c)]).sum())
        .collect()
}

/// `∂(-sDCG_i)/∂V_j`, using `cfg.v_gradient` to pick the full or the
/// self-term-only expression.
pub fn grad_v(
    i: usize,
    j: usize,
    p: &DMatrix<f64>,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    cfg: &OptimizerConfig,
) -> Vec<f64> {
    let u_i = row_of(u, i);
    let p_hat = predictions(&u_i, v);
    let coef = loss_gradient_wrt_predictions(
        &row_of(p, i),
        &p_hat,
        cfg.b,
        cfg.alpha,
        cfg.self_rank,
        cfg.v_gradient,
    );
    u_i.iter().map(|x| coef[j] * x).collect()
}

/// Total loss `-Σ_i sDCG_i`.
pub fn total_loss(p: &DMatrix<f64>, factors: &LatentFactors, cfg: &OptimizerConfig) -> f64 {
    (0..p.nrows())
        .map(|i| {
            -sdcg_with(
                &row_of(p, i),
                &factors.predict_row(i),
                cfg.b,
                cfg.alpha,
                cfg.self_rank,
            )
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    /// Factors at the epoch with the lowest loss.
    pub factors: LatentFactors,
    /// Total loss before training and after every epoch.
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
}

/// Standard-normal initialization of the model factors.
pub fn init_v(m: usize, k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(&[seed, TAG_V_INIT]);
    DMatrix::from_fn(m, k, |_, _| StandardNormal.sample(&mut rng))
}

/// Alternating SGD over dataset rows. Within an epoch, rows are visited in a
/// seeded random order; for each row `U_i` is stepped first, then every `V_j`
/// is stepped using the row's gradient at the updated `U_i`.
pub fn fit(p: &DMatrix<f64>, u0: &DMatrix<f64>, cfg: &OptimizerConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let (n, m) = p.shape();
    if u0.nrows() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: u0.nrows(),
        });
    }
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("initial U must be finite".into()));
    }
    let k = u0.ncols();
    let mut factors = LatentFactors {
        u: u0.clone(),
        v: init_v(m, k, cfg.seed),
    };
    let mut loss = total_loss(p, &factors, cfg);
    let mut loss_curve = vec![loss];
    let mut best = (loss, 0usize, factors.clone());
    let mut order: Vec<usize> = (0..n).collect();
    let mut u_i = vec![0.0; k];

    for epoch in 0..cfg.max_epochs {
        let lr = cfg.learning_rate(epoch);
        let mut rng = seed::rng(&[cfg.seed, TAG_SHUFFLE, epoch as u64]);
        order.shuffle(&mut rng);
        for &i in &order {
            let p_row = row_of(p, i);
            for c in 0..k {
                u_i[c] = factors.u[(i, c)];
            }
            if cfg.update_u {
                let p_hat = predictions(&u_i, &factors.v);
                let coef = loss_gradient_wrt_predictions(
                    &p_row,
                    &p_hat,
                    cfg.b,
                    cfg.alpha,
                    cfg.self_rank,
                    VGradient::Complete,
                );
                for c in 0..k {
                    let g: f64 = (0..m).map(|j| coef[j] * factors.v[(j, c)]).sum();
                    u_i[c] -= lr * g;
                    factors.u[(i, c)] = u_i[c];
                }
            }
            let p_hat = predictions(&u_i, &factors.v);
            let coef = loss_gradient_wrt_predictions(
                &p_row,
                &p_hat,
                cfg.b,
                cfg.alpha,
                cfg.self_rank,
                cfg.v_gradient,
            );
            for j in 0..m {
                for c in 0..k {
                    factors.v[(j, c)] -= lr * coef[j] * u_i[c];
                }
            }
        }
        let next = total_loss(p, &factors, cfg);
        if !next.is_finite()
            || factors
                .v
                .iter()
                .chain(factors.u.iter())
                .any(|x| !x.is_finite())
        {
            return Err(Error::NonFiniteLoss { epoch });
        }
        loss_curve.push(next);
        if next < best.0 {
            best = (next, epoch + 1, factors.clone());
        }
        let rel = (loss - next).abs() / loss.abs().max(f64::MIN_POSITIVE);
        loss = next;
        if rel < cfg.tol {
            break;
        }
    }
    Ok(FitOutcome {
        factors: best.2,
        loss_curve,
        best_epoch: best.1,
    })
}

/// Column vector helper for callers working with nalgebra vectors.
pub fn predict(u: &DVector<f64>, v: &DMatrix<f64>) -> Vec<f64> {
    (v * u).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dcg_hand_values() {
        let d = dcg_exact(&[1.0, 0.5], &[0.9, 0.1], 2.0);
        let expected = 1.0 + (2f64.sqrt() - 1.0) / 3f64.log2();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 1.26134).abs() < 1e-5);
        let r = dcg_exact(&[1.0, 0.5], &[0.1, 0.9], 2.0);
        assert!((r - 1.04514).abs() < 1e-5);
        assert_eq!(dcg_exact(&[0.7], &[123.0], 2.0), 2f64.powf(0.7) - 1.0);
    }

    #[test]
    fn sdcg_at_ties_and_large_alpha() {
        let s = sdcg_with(&[1.0, 0.5], &[0.3, 0.3], 2.0, 5.0, SelfRank::Sigmoid);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        // Counting the self-comparison exactly puts ties at rank 1.5.
        let s = sdcg(&[1.0, 0.5], &[0.3, 0.3], 2.0, 5.0);
        assert!((s - 2f64.sqrt() / 2.5f64.log2()).abs() < 1e-12);
        let s = sdcg(&[1.0, 0.5], &[0.9, 0.1], 2.0, 50.0);
        assert!((s - 1.26134).abs() < 1e-3);
        // With the sigmoid self term the large-alpha limit is rank + 1/2.
        let s = sdcg_with(&[1.0, 0.5], &[0.9, 0.1], 2.0, 50.0, SelfRank::Sigmoid);
        let limit = 1.0 / 1.5f64.log2() + (2f64.sqrt() - 1.0) / 2.5f64.log2();
        assert!((s - limit).abs() < 1e-12);
        assert_eq!(
            sdcg(&[0.4], &[1.0], 2.0, 1.0),
            dcg_exact(&[0.4], &[1.0], 2.0)
        );
    }

    #[test]
    fn shift_invariance() {
        let p = [0.2, 0.9, 0.4, 0.6];
        let h = [0.1, -0.3, 0.8, 0.25];
        let shifted: Vec<f64> = h.iter().map(|x| x + 7.5).collect();
        assert_eq!(dcg_exact(&p, &h, 2.0), dcg_exact(&p, &shifted, 2.0));
        assert!((sdcg(&p, &h, 2.0, 1.3) - sdcg(&p, &shifted, 2.0, 1.3)).abs() < 1e-12);
    }

    #[test]
    fn grad_u_at_zero_matches_closed_form() {
        let p = DMatrix::from_row_slice(1, 3, &[0.9, 0.2, 0.5]);
        let u = DMatrix::zeros(1, 2);
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 2.0]);
        let cfg = OptimizerConfig {
            self_rank: SelfRank::Sigmoid,
            ..Default::default()
        };
        let g = grad_u(0, &p, &u, &v, &cfg);
        // All w = 0: σ = 1/2, σ' = 1/4, β = 3/2 + (m-1)/2 = 5/2 for every model.
        let beta: f64 = 2.5;
        let mut expected = [0.0; 2];
        for j in 0..3 {
            let coef =
                std::f64::consts::LN_2 * (2f64.powf(p[(0, j)]) - 1.0) / (beta * beta.ln().powi(2));
            for k in 0..3 {
                if k == j {
                    continue;
                }
                for c in 0..2 {
                    expected[c] += coef * 0.25 * (v[(k, c)] - v[(j, c)]);
                }
            }
        }
        for c in 0..2 {
            assert!((g[c] - expected[c]).abs() < 1e-12, "{g:?} vs {expected:?}");
        }
    }

    #[test]
    fn learning_rate_cycle() {
        let cfg = OptimizerConfig::default();
        assert_eq!(cfg.learning_rate(0), cfg.lr_base);
        assert!((cfg.learning_rate(5) - cfg.lr_max).abs() < 1e-15);
        assert_eq!(cfg.learning_rate(10), cfg.lr_base);
    }

    #[test]
    fn smallest_instance_orders_pair() {
        let p = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let u0 = DMatrix::from_row_slice(1, 1, &[0.5]);
        let out = fit(&p, &u0, &OptimizerConfig::default()).unwrap();
        let pred = out.factors.predict_row(0);
        assert!(pred[0] > pred[1], "{pred:?}");
    }

    #[test]
    fn fit_is_deterministic() {
        let p = DMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 10) as f64 / 10.0);
        let u0 = DMatrix::from_fn(4, 2, |i, j| (i as f64 - j as f64) * 0.3);
        let cfg = OptimizerConfig {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(fit(&p, &u0, &cfg).unwrap(), fit(&p, &u0, &cfg).unwrap());
    }

    #[test]
    fn diverging_rate_is_reported() {
        let p = DMatrix::from_fn(3, 4, |i, j| ((i + j) % 4) as f64 / 4.0);
        let u0 = DMatrix::from_element(3, 2, 1e-3);
        let cfg = OptimizerConfig {
            alpha: 1e3,
            lr_base: f64::MAX,
            lr_max: f64::MAX,
            ..Default::default()
        };
        assert!(matches!(
            fit(&p, &u0, &cfg),
            Err(Error::NonFiniteLoss { .. })
        ));
    }
}
