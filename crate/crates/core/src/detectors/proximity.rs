//! Neighborhood-based detectors: KNN distance, LOF, COF and fast ABOD.

use super::neighbors::{Metric, NeighborTable};
use super::KnnMethod;

const DENSITY_EPS: f64 = 1e-10;

pub(super) fn knn(table: &NeighborTable, k: usize, method: KnnMethod) -> Vec<f64> {
    (0..table.n())
        .map(|i| {
            let d = table.distances(i, k);
            match method {
                KnnMethod::Largest => d[k - 1],
                KnnMethod::Mean => d.iter().sum::<f64>() / k as f64,
                KnnMethod::Median => {
                    // Distances are already sorted ascending.
                    if k % 2 == 1 {
                        d[k / 2]
                    } else {
                        0.5 * (d[k / 2 - 1] + d[k / 2])
                    }
                }
            }
        })
        .collect()
}

pub(super) fn lof(table: &NeighborTable, k: usize) -> Vec<f64> {
    let n = table.n();
    let k_distance: Vec<f64> = (0..n).map(|i| table.distances(i, k)[k - 1]).collect();
    let lrd: Vec<f64> = (0..n)
        .map(|i| {
            let reach: f64 = table
                .indices(i, k)
                .iter()
                .zip(table.distances(i, k))
                .map(|(&o, &d)| d.max(k_distance[o as usize]))
                .sum();
            1.0 / (reach / k as f64 + DENSITY_EPS)
        })
        .collect();
    (0..n)
        .map(|i| {
            let neighbor_lrd: f64 = table.indices(i, k).iter().map(|&o| lrd[o as usize]).sum();
            neighbor_lrd / k as f64 / lrd[i]
        })
        .collect()
}

/// Average chaining distance of each point along its set-based nearest path
/// through its `k` neighbors.
fn chaining_distances(rows: &[f64], p: usize, table: &NeighborTable, k: usize) -> Vec<f64> {
    let n = table.n();
    let row = |i: usize| &rows[i * p..(i + 1) * p];
    let r = k as f64;
    let mut out = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = Vec::with_capacity(k);
    let mut best: Vec<f64> = Vec::with_capacity(k);
    for i in 0..n {
        remaining.clear();
        remaining.extend(table.indices(i, k).iter().map(|&j| j as usize));
        best.clear();
        best.extend_from_slice(table.distances(i, k));
        let mut acc = 0.0;
        for step in 1..=k {
            // Next path vertex: the remaining neighbor closest to the current set.
            let (pos, _) = best
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                .expect("non-empty");
            let cost = best[pos];
            acc += 2.0 * (r + 1.0 - step as f64) / (r * (r + 1.0)) * cost;
            let added = remaining.swap_remove(pos);
            best.swap_remove(pos);
            let a = row(added);
            for (q, &cand) in remaining.iter().enumerate() {
                let d = Metric::Euclidean.distance(a, row(cand));
                if d < best[q] {
                    best[q] = d;
                }
            }
        }
        out.push(acc);
    }
    out
}

pub(super) fn cof(rows: &[f64], p: usize, table: &NeighborTable, k: usize) -> Vec<f64> {
    let ac = chaining_distances(rows, p, table, k);
    (0..table.n())
        .map(|i| {
            let mean_neighbors: f64 = table
                .indices(i, k)
                .iter()
                .map(|&o| ac[o as usize])
                .sum::<f64>()
                / k as f64;
            if ac[i] == 0.0 {
                0.0
            } else {
                ac[i] / (mean_neighbors + DENSITY_EPS)
            }
        })
        .collect()
}

/// Negated variance of the distance-weighted angle term over neighbor pairs.
pub(super) fn abod(rows: &[f64], p: usize, table: &NeighborTable, k: usize) -> Vec<f64> {
    let row = |i: usize| &rows[i * p..(i + 1) * p];
    let mut diffs: Vec<f64> = vec![0.0; k * p];
    let mut norms: Vec<f64> = vec![0.0; k];
    let mut terms: Vec<f64> = Vec::with_capacity(k * (k - 1) / 2);
    (0..table.n())
        .map(|i| {
            let x = row(i);
            for (a, &j) in table.indices(i, k).iter().enumerate() {
                let y = row(j as usize);
                let mut sq = 0.0;
                for d in 0..p {
                    let v = y[d] - x[d];
                    diffs[a * p + d] = v;
                    sq += v * v;
                }
                norms[a] = sq;
            }
            terms.clear();
            for a in 0..k {
                if norms[a] == 0.0 {
                    continue;
                }
                for b in (a + 1)..k {
                    if norms[b] == 0.0 {
                        continue;
                    }
                    let dot: f64 = (0..p).map(|d| diffs[a * p + d] * diffs[b * p + d]).sum();
                    terms.push(dot / (norms[a] * norms[b]));
                }
            }
            if terms.is_empty() {
                return 0.0;
            }
            let mean = terms.iter().sum::<f64>() / terms.len() as f64;
            let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / terms.len() as f64;
            -var
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[f64], p: usize, k: usize) -> NeighborTable {
        NeighborTable::build(rows, rows.len() / p, p, k, Metric::Euclidean)
    }

    #[test]
    fn knn_hand_computed() {
        let rows = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0];
        let t = table(&rows, 2, 2);
        assert_eq!(knn(&t, 1, KnnMethod::Largest), vec![1.0, 1.0, 10.0]);
        let mean = knn(&t, 2, KnnMethod::Mean);
        assert!((mean[2] - (10.0 + 101f64.sqrt()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn lof_uniform_line_is_one() {
        // Interior points of an evenly spaced line have LOF 1.
        let rows: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let t = table(&rows, 1, 2);
        let s = lof(&t, 2);
        assert!((s[10] - 1.0).abs() < 1e-6);
        let mut with_far = rows.clone();
        with_far.push(100.0);
        let t = table(&with_far, 1, 2);
        let s = lof(&t, 2);
        let top = s.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(s[20], top);
    }

    #[test]
    fn cof_flags_isolated_point() {
        let mut rows: Vec<f64> = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                rows.push(i as f64);
                rows.push(j as f64);
            }
        }
        rows.extend([12.0, 12.0]);
        let t = table(&rows, 2, 5);
        let s = cof(&rows, 2, &t, 5);
        assert_eq!(crate::stats::argmax(&s), 25);
    }

    #[test]
    fn abod_flags_isolated_point() {
        let mut rows: Vec<f64> = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                rows.push(i as f64 + 0.1 * j as f64);
                rows.push(j as f64);
            }
        }
        rows.extend([30.0, -20.0]);
        let t = table(&rows, 2, 10);
        let s = abod(&rows, 2, &t, 10);
        assert_eq!(crate::stats::argmax(&s), 36);
    }
}
