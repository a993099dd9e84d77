use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "manhattan")]
    Manhattan,
    #[serde(rename = "euclidean")]
    Euclidean,
    /// Minkowski distance with exponent 3.
    #[serde(rename = "minkowski")]
    Minkowski3,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Manhattan => "manhattan",
            Metric::Euclidean => "euclidean",
            Metric::Minkowski3 => "minkowski",
        }
    }

    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Minkowski3 => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs().powi(3))
                .sum::<f64>()
                .cbrt(),
        }
    }
}

/// The `k` nearest neighbors of every row (self excluded), sorted by
/// distance with ties broken by row index.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    k: usize,
    idx: Vec<u32>,
    dist: Vec<f64>,
}

impl NeighborTable {
    pub fn build(rows: &[f64], n: usize, p: usize, k: usize, metric: Metric) -> Self {
        let k = k.min(n.saturating_sub(1));
        let mut idx = Vec::with_capacity(n * k);
        let mut dist = Vec::with_capacity(n * k);
        let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(n);
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        for i in 0..n {
            let a = &rows[i * p..(i + 1) * p];
            scratch.clear();
            scratch.extend(
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (metric.distance(a, &rows[j * p..(j + 1) * p]), j as u32)),
            );
            if k < scratch.len() {
                scratch.select_nth_unstable_by(k, cmp);
                scratch.truncate(k);
            }
            scratch.sort_unstable_by(cmp);
            for &(d, j) in &scratch {
                dist.push(d);
                idx.push(j);
            }
        }
        Self { k, idx, dist }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        if self.k == 0 {
            0
        } else {
            self.idx.len() / self.k
        }
    }

    /// First `k` neighbor indices of row `i`.
    pub fn indices(&self, i: usize, k: usize) -> &[u32] {
        &self.idx[i * self.k..i * self.k + k]
    }

    pub fn distances(&self, i: usize, k: usize) -> &[f64] {
        &self.dist[i * self.k..i * self.k + k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(Metric::Manhattan.distance(&a, &b), 7.0);
        assert_eq!(Metric::Euclidean.distance(&a, &b), 5.0);
        let m3 = Metric::Minkowski3.distance(&a, &b);
        assert!((m3 - (27.0f64 + 64.0).cbrt()).abs() < 1e-12);
    }

    #[test]
    fn ties_break_by_index() {
        // Row 0 is equidistant from rows 1 and 2.
        let rows = [0.0, 1.0, -1.0, 5.0];
        let t = NeighborTable::build(&rows, 4, 1, 2, Metric::Euclidean);
        assert_eq!(t.indices(0, 2), &[1, 2]);
        assert_eq!(t.distances(0, 2), &[1.0, 1.0]);
        assert_eq!(t.indices(3, 1), &[1]);
    }
}
