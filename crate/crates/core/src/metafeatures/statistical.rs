use nalgebra::DMatrix;
use rand::Rng;

use super::{push_six, six_names};
use crate::data::Dataset;
use crate::seed;
use crate::stats::{
    anova_p_value, central_moment, gini, kurtosis, mean, normality_p_value, normalized_entropy,
    quantile_sorted, skewness, std_dev,
};

pub const STATISTICAL_LEN: usize = 6 + 21 + 7 * 6 + 6 + 1;

const ENTROPY_BINS: usize = 10;
const TAG_ANOVA: u64 = 0x616e_6f76;

const POOLED: [&str; 21] = [
    "mean",
    "median",
    "var",
    "min",
    "max",
    "std",
    "q01",
    "q25",
    "q75",
    "q99",
    "iqr",
    "normalized_mean",
    "normalized_median",
    "range",
    "gini",
    "median_abs_dev",
    "avg_abs_dev",
    "quantile_coef_dispersion",
    "coef_variation",
    "frac_outside_q01_q99",
    "frac_beyond_3std",
];

const PER_FEATURE: [&str; 7] = [
    "skewness",
    "kurtosis",
    "correlation",
    "covariance",
    "sparsity",
    "anova_p",
    "entropy",
];

pub fn statistical_names() -> Vec<String> {
    let mut names: Vec<String> = [
        "n_samples",
        "n_features",
        "features_per_sample",
        "log_n_samples",
        "log_n_features",
        "log_samples_per_feature",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(POOLED.iter().map(|s| s.to_string()));
    for block in PER_FEATURE {
        six_names(&mut names, block);
    }
    names.extend((5..=10).map(|k| format!("moment_{k}")));
    names.push("normality_rejection_fraction".into());
    names
}

pub fn extract_statistical(data: &Dataset) -> Vec<f64> {
    extract_statistical_matrix(data.x())
}

/// Statistical block of any non-empty matrix; rows are samples.
pub fn extract_statistical_matrix(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let pf = p as f64;
    let mut out = Vec::with_capacity(STATISTICAL_LEN);
    out.extend_from_slice(&[nf, pf, pf / nf, nf.ln(), pf.ln(), (nf / pf).ln()]);

    let columns: Vec<Vec<f64>> = (0..p)
        .map(|j| x.column(j).iter().copied().collect())
        .collect();
    // Sorted copies make every reduction independent of row order.
    let orders: Vec<Vec<u32>> = columns.iter().map(|c| ascending_order(c)).collect();
    let sorted_cols: Vec<Vec<f64>> = columns
        .iter()
        .zip(&orders)
        .map(|(c, o)| o.iter().map(|&r| c[r as usize]).collect())
        .collect();
    let pooled = merge_all(&sorted_cols);
    pooled_block(&mut out, &pooled);

    let skews: Vec<f64> = sorted_cols.iter().map(|c| skewness(c)).collect();
    let kurts: Vec<f64> = sorted_cols.iter().map(|c| kurtosis(c)).collect();
    push_six(&mut out, &skews);
    push_six(&mut out, &kurts);

    let means: Vec<f64> = columns.iter().map(|c| mean(c)).collect();
    let stds: Vec<f64> = columns.iter().map(|c| std_dev(c)).collect();
    let mut corr = Vec::new();
    let mut cov = Vec::new();
    for a in 0..p {
        for b in (a + 1)..p {
            let (ma, mb) = (means[a], means[b]);
            let c = columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(x, y)| (x - ma) * (y - mb))
                .sum::<f64>()
                / nf;
            corr.push(if stds[a] > 0.0 && stds[b] > 0.0 {
                c / (stds[a] * stds[b])
            } else {
                f64::NAN
            });
            cov.push(c);
        }
    }
    push_six(&mut out, &corr);
    push_six(&mut out, &cov);

    let sparsity: Vec<f64> = sorted_cols
        .iter()
        .map(|c| {
            let unique = 1 + c.windows(2).filter(|w| w[1] != w[0]).count();
            unique as f64 / nf
        })
        .collect();
    push_six(&mut out, &sparsity);

    let anova: Vec<f64> = (0..p)
        .map(|j| anova_against_split(&columns, &sorted_cols, &orders[j], j))
        .collect();
    push_six(&mut out, &anova);

    let entropy: Vec<f64> = sorted_cols
        .iter()
        .map(|c| normalized_entropy(c, ENTROPY_BINS))
        .collect();
    push_six(&mut out, &entropy);

    out.extend_from_slice(&high_moments(&pooled));

    let pvals: Vec<f64> = sorted_cols
        .iter()
        .map(|c| normality_p_value(c))
        .filter(|v| v.is_finite())
        .collect();
    out.push(if pvals.is_empty() {
        f64::NAN
    } else {
        pvals.iter().filter(|&&v| v < 0.05).count() as f64 / pvals.len() as f64
    });

    debug_assert_eq!(out.len(), STATISTICAL_LEN);
    out
}

/// Central moments of orders 5 through 10 in one pass. Each power is formed
/// with the same multiplication sequence as `powi`.
fn high_moments(v: &[f64]) -> [f64; 6] {
    let mu = mean(v);
    let mut sums = [0.0f64; 6];
    for &x in v {
        let d = x - mu;
        let d2 = d * d;
        let d4 = d2 * d2;
        let d8 = d4 * d4;
        let terms = [d * d4, d2 * d4, d * d2 * d4, d8, d * d8, d2 * d8];
        for (s, t) in sums.iter_mut().zip(terms) {
            *s += t;
        }
    }
    sums.map(|s| s / v.len() as f64)
}

fn pooled_block(out: &mut Vec<f64>, v: &[f64]) {
    let mu = mean(v);
    let var = central_moment(v, 2);
    let sd = var.sqrt();
    let lo = v[0];
    let hi = v[v.len() - 1];
    let q = |t: f64| quantile_sorted(v, t);
    let (q01, q25, med, q75, q99) = (q(0.01), q(0.25), q(0.5), q(0.75), q(0.99));
    let ratio = |a: f64, b: f64| if b != 0.0 { a / b } else { f64::NAN };
    let abs_dev = sorted_abs_deviations(v, med);
    let len = v.len() as f64;
    let outside = v.iter().filter(|&&x| x < q01 || x > q99).count() as f64 / len;
    let beyond = v.iter().filter(|&&x| (x - mu).abs() > 3.0 * sd).count() as f64 / len;
    out.extend_from_slice(&[
        mu,
        med,
        var,
        lo,
        hi,
        sd,
        q01,
        q25,
        q75,
        q99,
        q75 - q25,
        ratio(mu, hi),
        ratio(med, hi),
        hi - lo,
        gini(v),
        quantile_sorted(&abs_dev, 0.5),
        mean(&abs_dev),
        ratio(q75 - q25, q75 + q25),
        ratio(sd, mu),
        outside,
        beyond,
    ]);
}

/// Row indices of `v` in ascending `total_cmp` order.
fn ascending_order(v: &[f64]) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = v.iter().zip(0u32..).map(|(&x, i)| (x, i)).collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, i)| i).collect()
}

fn merge_two(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        if a[i].total_cmp(&b[k]).is_le() {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[k]);
            k += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[k..]);
    out
}

/// All values of the sorted runs in one ascending vector.
fn merge_all(runs: &[Vec<f64>]) -> Vec<f64> {
    match runs {
        [] => Vec::new(),
        [one] => one.clone(),
        _ => {
            let (a, b) = runs.split_at(runs.len() / 2);
            merge_two(&merge_all(a), &merge_all(b))
        }
    }
}

/// `|v_i - c|` in ascending order for ascending `v`: the deviations left of
/// `c` descend and those right of it ascend, so one merge sorts them.
fn sorted_abs_deviations(v: &[f64], c: f64) -> Vec<f64> {
    let split = v.partition_point(|&x| x < c);
    let mut left = v[..split].iter().rev().map(|x| (x - c).abs()).peekable();
    let mut right = v[split..].iter().map(|x| (x - c).abs()).peekable();
    let mut out = Vec::with_capacity(v.len());
    loop {
        let next = match (left.peek(), right.peek()) {
            (Some(a), Some(b)) => {
                if a.total_cmp(b).is_le() {
                    left.next()
                } else {
                    right.next()
                }
            }
            (Some(_), None) => left.next(),
            (None, Some(_)) => right.next(),
            (None, None) => break,
        };
        out.extend(next);
    }
    out
}

/// One-way ANOVA of feature `j` between the two halves of a median split on
/// another feature. The partner is drawn from a generator keyed only by `p`
/// and `j`, so it does not depend on the data.
fn anova_against_split(
    columns: &[Vec<f64>],
    sorted_cols: &[Vec<f64>],
    order: &[u32],
    j: usize,
) -> f64 {
    let p = columns.len();
    if p < 2 {
        return f64::NAN;
    }
    let mut rng = seed::rng(&[TAG_ANOVA, p as u64, j as u64]);
    let mut partner = rng.random_range(0..p - 1);
    if partner >= j {
        partner += 1;
    }
    let split = quantile_sorted(&sorted_cols[partner], 0.5);
    let mut low = Vec::new();
    let mut high = Vec::new();
    for (&r, &v) in order.iter().zip(&sorted_cols[j]) {
        if columns[partner][r as usize] <= split {
            low.push(v);
        } else {
            high.push(v);
        }
    }
    anova_p_value(&[&low, &high])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sorted;

    #[test]
    fn merged_runs_match_pooled_sort() {
        let mut rng = seed::rng(&[12]);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|j| {
                (0..17 + j)
                    .map(|_| rng.random_range(-2i32..3) as f64 * 0.5)
                    .collect()
            })
            .collect();
        let runs: Vec<Vec<f64>> = cols.iter().map(|c| sorted(c)).collect();
        let all: Vec<f64> = cols.concat();
        assert_eq!(merge_all(&runs), sorted(&all));
        for c in &cols {
            let o = ascending_order(c);
            let via: Vec<f64> = o.iter().map(|&r| c[r as usize]).collect();
            assert_eq!(via, sorted(c));
        }
    }

    #[test]
    fn merged_deviations_match_sorting() {
        let mut rng = seed::rng(&[11]);
        for n in [1usize, 2, 7, 100] {
            let v = sorted(
                &(0..n)
                    .map(|_| rng.random_range(-3.0..3.0))
                    .collect::<Vec<f64>>(),
            );
            let med = quantile_sorted(&v, 0.5);
            let mut want: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
            want.sort_by(f64::total_cmp);
            assert_eq!(sorted_abs_deviations(&v, med), want);
        }
    }

    #[test]
    fn high_moments_match_powi_bitwise() {
        let mut rng = seed::rng(&[9]);
        let v: Vec<f64> = (0..500).map(|_| rng.random_range(-4.0..4.0)).collect();
        let fast = high_moments(&v);
        for (k, got) in (5..=10).zip(fast) {
            assert_eq!(got.to_bits(), central_moment(&v, k).to_bits(), "order {k}");
        }
    }

    #[test]
    fn correlation_block_matches_pairwise_helpers() {
        use crate::stats::{covariance, pearson};
        let mut rng = seed::rng(&[10]);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let d = Dataset::from_rows("c", &rows, None).unwrap();
        let v = extract_statistical(&d);
        let cols: Vec<Vec<f64>> = (0..4).map(|j| d.column(j)).collect();
        let corr: Vec<f64> = (0..4)
            .flat_map(|a| ((a + 1)..4).map(move |b| (a, b)))
            .map(|(a, b)| pearson(&cols[a], &cols[b]))
            .collect();
        let cov: Vec<f64> = (0..4)
            .flat_map(|a| ((a + 1)..4).map(move |b| (a, b)))
            .map(|(a, b)| covariance(&cols[a], &cols[b]))
            .collect();
        let max = corr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cmax = cov.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(slot(&v, "correlation_max").to_bits(), max.to_bits());
        assert_eq!(slot(&v, "covariance_max").to_bits(), cmax.to_bits());
    }

    fn slot(v: &[f64], name: &str) -> f64 {
        let i = statistical_names().iter().position(|n| n == name).unwrap();
        v[i]
    }

    #[test]
    fn two_point_column() {
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 2.0]);
        let v = extract_statistical_matrix(&x);
        assert_eq!(v.len(), STATISTICAL_LEN);
        assert_eq!(slot(&v, "mean"), 1.0);
        assert_eq!(slot(&v, "range"), 2.0);
        assert_eq!(slot(&v, "std"), 1.0);
    }

    #[test]
    fn constant_column() {
        let x = DMatrix::from_element(6, 1, 4.2);
        let v = extract_statistical_matrix(&x);
        assert_eq!(slot(&v, "var"), 0.0);
        assert!(slot(&v, "skewness_min").is_nan());
    }

    #[test]
    fn row_permutation_invariance() {
        let x = DMatrix::from_fn(40, 4, |i, j| {
            ((i * 37 + j * 11) % 17) as f64 * 0.3 - (j as f64)
        });
        let perm: Vec<usize> = (0..40).map(|i| (i * 7) % 40).collect();
        let y = x.select_rows(&perm);
        let a = extract_statistical_matrix(&x);
        let b = extract_statistical_matrix(&y);
        for (i, (u, w)) in a.iter().zip(&b).enumerate() {
            let same = (u.is_nan() && w.is_nan()) || (u - w).abs() <= 1e-9 * u.abs().max(1.0);
            assert!(same, "slot {} {u} vs {w}", statistical_names()[i]);
        }
    }

    #[test]
    fn global_block() {
        let x = DMatrix::from_fn(50, 5, |i, j| (i + j) as f64);
        let v = extract_statistical_matrix(&x);
        assert_eq!(&v[..3], &[50.0, 5.0, 0.1]);
        assert!((slot(&v, "log_samples_per_feature") - 10f64.ln()).abs() < 1e-15);
    }
}
