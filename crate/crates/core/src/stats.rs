//! Descriptive statistics shared by the meta-feature extractor, the detectors
//! and the evaluation harness. Moments are population moments throughout.

use statrs::distribution::{ContinuousCDF, FisherSnedecor};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    central_moment(xs, 2)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn central_moment(xs: &[f64], order: i32) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu).powi(order)).sum::<f64>() / xs.len() as f64
}

/// Standardized third moment; NaN when the sample has no spread.
pub fn skewness(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    if !(m2 > 0.0) || !spread(xs) {
        return f64::NAN;
    }
    central_moment(xs, 3) / m2.powf(1.5)
}

/// Pearson kurtosis `mu_4 / sigma^4` (not excess).
pub fn kurtosis(xs: &[f64]) -> f64 {
    let m2 = central_moment(xs, 2);
    if !(m2 > 0.0) || !spread(xs) {
        return f64::NAN;
    }
    central_moment(xs, 4) / (m2 * m2)
}

fn spread(xs: &[f64]) -> bool {
    let first = xs[0];
    xs.iter().any(|&x| x != first)
}

pub fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile on pre-sorted data, `q` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted(xs), 0.5)
}

/// Gini coefficient of the values shifted to be non-negative.
pub fn gini(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let lo = sorted[0].min(0.0);
    let total: f64 = sorted.iter().map(|x| x - lo).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * (x - lo))
        .sum();
    weighted / (n as f64 * total)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let cov = covariance(a, b);
    let sa = std_dev(a);
    let sb = std_dev(b);
    if sa > 0.0 && sb > 0.0 {
        cov / (sa * sb)
    } else {
        f64::NAN
    }
}

pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64
}

/// The six summary statistics used to aggregate per-feature quantities:
/// min, max, mean, std, skewness, kurtosis. Non-finite inputs are dropped;
/// an empty remainder yields six NaNs.
pub fn six_summary(xs: &[f64]) -> [f64; 6] {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if finite.is_empty() {
        return [f64::NAN; 6];
    }
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [
        min,
        max,
        mean(&finite),
        std_dev(&finite),
        skewness(&finite),
        kurtosis(&finite),
    ]
}

pub const SIX_SUMMARY_NAMES: [&str; 6] = ["min", "max", "mean", "std", "skew", "kurt"];

/// One-way ANOVA p-value across groups. NaN when fewer than two non-empty
/// groups exist or the within-group variance vanishes.
pub fn anova_p_value(groups: &[&[f64]]) -> f64 {
    let groups: Vec<&[f64]> = groups.iter().copied().filter(|g| !g.is_empty()).collect();
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if k < 2 || n <= k {
        return f64::NAN;
    }
    let grand = groups.iter().flat_map(|g| g.iter()).sum::<f64>() / n as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for g in &groups {
        let m = mean(g);
        between += g.len() as f64 * (m - grand).powi(2);
        within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    let df_between = (k - 1) as f64;
    let df_within = (n - k) as f64;
    if within <= 0.0 {
        return if between > 0.0 { 0.0 } else { f64::NAN };
    }
    let f = (between / df_between) / (within / df_within);
    match FisherSnedecor::new(df_between, df_within) {
        Ok(dist) => dist.sf(f),
        Err(_) => f64::NAN,
    }
}

/// D'Agostino–Pearson omnibus normality test p-value (skewness and kurtosis
/// z-scores combined into a chi-squared statistic with two degrees of
/// freedom). Requires at least 8 observations with non-zero spread.
pub fn normality_p_value(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 8 {
        return f64::NAN;
    }
    let b1 = skewness(xs);
    let b2 = kurtosis(xs);
    if !b1.is_finite() || !b2.is_finite() {
        return f64::NAN;
    }

    let y = b1 * (((n + 1.0) * (n + 3.0)) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let z_skew = delta * (y / alpha + ((y / alpha).powi(2) + 1.0).sqrt()).ln();

    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * ((6.0 * (n + 3.0) * (n + 5.0)) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0
        + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = if denom == 0.0 {
        99.0
    } else {
        denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt()
    };
    let z_kurt = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z_skew * z_skew + z_kurt * z_kurt;
    (-k2 / 2.0).exp()
}

/// Shannon entropy (bits) of an equal-width histogram over the values,
/// normalized by `log2(n)`.
pub fn normalized_entropy(xs: &[f64], n_bins: usize) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let (lo, hi) = min_max(xs);
    if hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0usize; n_bins];
    let width = (hi - lo) / n_bins as f64;
    for &x in xs {
        counts[bin_index(x, lo, width, n_bins)] += 1;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.log2()
        })
        .sum();
    h / (n as f64).log2()
}

pub fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Equal-width bin index with the right edge folded into the last bin.
pub fn bin_index(x: f64, lo: f64, width: f64, n_bins: usize) -> usize {
    if width <= 0.0 {
        return 0;
    }
    // Truncation equals floor here: negatives and NaN saturate to bin 0.
    (((x - lo) / width) as usize).min(n_bins - 1)
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Indices of the maximum; ties resolved toward the smaller index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn moments_of_two_points() {
        let xs = [0.0, 2.0];
        assert_eq!(mean(&xs), 1.0);
        assert_eq!(variance(&xs), 1.0);
        assert_eq!(std_dev(&xs), 1.0);
        assert_eq!(skewness(&xs), 0.0);
        assert_eq!(kurtosis(&xs), 1.0);
    }

    #[test]
    fn constant_sample_has_nan_shape_moments() {
        let xs = [3.0; 5];
        assert_eq!(variance(&xs), 0.0);
        assert!(skewness(&xs).is_nan());
        assert!(kurtosis(&xs).is_nan());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_sorted(&s, 0.25), 1.75);
    }

    #[test]
    fn gini_extremes() {
        assert_eq!(gini(&[1.0, 1.0, 1.0]), 0.0);
        // One holder of everything among n: (n-1)/n.
        assert_abs_diff_eq!(gini(&[0.0, 0.0, 0.0, 4.0]), 0.75);
    }

    #[test]
    fn anova_detects_shifted_group() {
        let a: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert!(anova_p_value(&[&a, &b]) < 1e-10);
        let p_same = anova_p_value(&[&a, &a]);
        assert_abs_diff_eq!(p_same, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn normality_rejects_bimodal() {
        let mut xs: Vec<f64> = (0..200)
            .map(|i| if i % 2 == 0 { -5.0 } else { 5.0 })
            .collect();
        xs[0] = -5.1;
        assert!(normality_p_value(&xs) < 0.05);
        assert!(normality_p_value(&xs[..5]).is_nan());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn argmax_prefers_smaller_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn entropy_bounds() {
        let xs: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let h = normalized_entropy(&xs, 64);
        assert_abs_diff_eq!(h, 1.0, epsilon = 1e-12);
        assert_eq!(normalized_entropy(&[1.0; 10], 10), 0.0);
    }
}
