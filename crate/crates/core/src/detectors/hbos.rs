use super::LOG_EPS;
use crate::data::Dataset;
use crate::stats::{bin_index, min_max};

/// Fitted HBOS histograms and the resulting scores.
#[derive(Debug, Clone)]
pub struct HbosModel {
    pub scores: Vec<f64>,
    /// Per feature, the density of every bin.
    pub densities: Vec<Vec<f64>>,
}

/// Histogram-based outlier score. Each feature gets `n_bins` equal-width
/// bins over its range; a bin whose count is at most
/// `tolerance * n / n_bins` is sparse and its count is floored to that
/// threshold before converting to density `count / (n * width)`.
pub fn hbos(data: &Dataset, n_bins: usize, tolerance: f64) -> HbosModel {
    let n = data.n_samples();
    let threshold = tolerance * n as f64 / n_bins as f64;
    let mut scores = vec![0.0; n];
    let mut densities = Vec::with_capacity(data.n_features());
    for j in 0..data.n_features() {
        let col = data.column(j);
        let (lo, hi) = min_max(&col);
        let (width, bin_width) = if hi > lo {
            let w = (hi - lo) / n_bins as f64;
            (w, w)
        } else {
            (0.0, 1.0)
        };
        let mut counts = vec![0usize; n_bins];
        let bins: Vec<usize> = col
            .iter()
            .map(|&x| bin_index(x, lo, width, n_bins))
            .collect();
        for &b in &bins {
            counts[b] += 1;
        }
        let density: Vec<f64> = counts
            .iter()
            .map(|&c| {
                let c = c as f64;
                let effective = if c <= threshold { threshold.max(c) } else { c };
                effective / (n as f64 * bin_width)
            })
            .collect();
        for (s, &b) in scores.iter_mut().zip(&bins) {
            *s += (1.0 / (density[b] + LOG_EPS)).ln();
        }
        densities.push(density);
    }
    HbosModel { scores, densities }
}
