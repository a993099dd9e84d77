use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};

use super::LOG_EPS;
use crate::data::Dataset;
use crate::seed;
use crate::stats::{bin_index, min_max};

const TAG: u64 = 0x6c6f_6461;

#[derive(Debug, Clone)]
pub struct LodaModel {
    pub scores: Vec<f64>,
    /// Dense projection vectors, one per cut.
    pub projections: Vec<Vec<f64>>,
    /// Bin densities of each projection's histogram.
    pub densities: Vec<Vec<f64>>,
}

/// Sparse random projections (`ceil(sqrt(p))` non-zero standard-normal
/// weights each) followed by one equal-width histogram per projection.
pub fn loda(data: &Dataset, n_bins: usize, n_random_cuts: usize, seed: u64) -> LodaModel {
    let n = data.n_samples();
    let p = data.n_features();
    let nonzero = ((p as f64).sqrt().ceil() as usize).clamp(1, p);
    let rows = data.rows_flat();
    let mut scores = vec![0.0; n];
    let mut projections = Vec::with_capacity(n_random_cuts);
    let mut densities = Vec::with_capacity(n_random_cuts);
    for cut in 0..n_random_cuts {
        let mut rng = seed::rng(&[seed, TAG, cut as u64]);
        let mut w = vec![0.0; p];
        for f in index::sample(&mut rng, p, nonzero) {
            w[f] = StandardNormal.sample(&mut rng);
        }
        let support: Vec<usize> = (0..p).filter(|&f| w[f] != 0.0).collect();
        let proj: Vec<f64> = rows
            .chunks(p)
            .map(|x| support.iter().map(|&f| x[f] * w[f]).sum())
            .collect();
        let (lo, hi) = min_max(&proj);
        let (width, bin_width) = if hi > lo {
            let w = (hi - lo) / n_bins as f64;
            (w, w)
        } else {
            (0.0, 1.0)
        };
        let mut counts = vec![0usize; n_bins];
        let bins: Vec<usize> = proj
            .iter()
            .map(|&v| bin_index(v, lo, width, n_bins))
            .collect();
        for &b in &bins {
            counts[b] += 1;
        }
        let density: Vec<f64> = counts
            .iter()
            .map(|&c| c as f64 / (n as f64 * bin_width))
            .collect();
        let log_density: Vec<f64> = density.iter().map(|d| (d + LOG_EPS).ln()).collect();
        for (s, &b) in scores.iter_mut().zip(&bins) {
            *s -= log_density[b];
        }
        projections.push(w);
        densities.push(density);
    }
    for s in &mut scores {
        *s /= n_random_cuts as f64;
    }
    LodaModel {
        scores,
        projections,
        densities,
    }
}
