//! Isolation forest with per-tree feature subsampling.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::seed;

const SUBSAMPLE: usize = 256;
/// Node slots per tree; a binary tree over `SUBSAMPLE` points has fewer.
const NODE_CAP: usize = 2 * SUBSAMPLE;
const _: () = assert!(NODE_CAP.is_power_of_two() && NODE_CAP <= u16::MAX as usize);
const TAG: u64 = 0x6966_6f72;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful BST search over `n` points.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

/// A split sends `x[feature] < value` to `left` and the rest to `right`.
/// A leaf points both children at itself, so every row can take exactly
/// `depth` steps without branching on the node kind.
#[derive(Debug, Clone, Copy)]
struct Node {
    value: f64,
    feature: u32,
    left: u16,
    right: u16,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Box<[Node; NODE_CAP]>,
    /// Per node: depth plus the expected remaining path for its sample count.
    path: Vec<f64>,
    depth: usize,
    leaves: usize,
    split_counts: Vec<usize>,
}

/// Structural summary of one fitted tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStats {
    pub depth: usize,
    pub leaves: usize,
    /// Split counts per feature, normalized to sum to one (all zero for a stump).
    pub importance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    subsample: usize,
}

impl IsolationForest {
    pub fn fit(data: &Dataset, n_estimators: usize, max_features: f64, seed: u64) -> Self {
        let n = data.n_samples();
        let p = data.n_features();
        let subsample = SUBSAMPLE.min(n);
        let height_limit = (subsample as f64).log2().ceil() as usize;
        let n_feat = ((max_features * p as f64).ceil() as usize).clamp(1, p);
        let columns: Vec<Vec<f64>> = (0..p).map(|j| data.column(j)).collect();
        let trees = (0..n_estimators)
            .map(|t| {
                let mut rng = seed::rng(&[seed, TAG, t as u64]);
                let mut rows: Vec<usize> = index::sample(&mut rng, n, subsample).into_vec();
                let mut features = index::sample(&mut rng, p, n_feat).into_vec();
                features.sort_unstable();
                let mut grower = Grower {
                    columns: &columns,
                    features: &features,
                    height_limit,
                    rng: &mut rng,
                    candidates: Vec::with_capacity(features.len()),
                    nodes: Vec::with_capacity(NODE_CAP),
                    path: Vec::with_capacity(NODE_CAP),
                    depth: 0,
                    leaves: 0,
                    split_counts: vec![0; p],
                };
                grower.grow(&mut rows, 0);
                let mut nodes = grower.nodes;
                let pad = nodes.len();
                nodes.resize(
                    NODE_CAP,
                    Node {
                        value: f64::INFINITY,
                        feature: 0,
                        left: pad as u16,
                        right: pad as u16,
                    },
                );
                Tree {
                    nodes: nodes.into_boxed_slice().try_into().expect("node capacity"),
                    path: grower.path,
                    depth: grower.depth,
                    leaves: grower.leaves,
                    split_counts: grower.split_counts,
                }
            })
            .collect();
        Self { trees, subsample }
    }

    /// Anomaly score `2^(-E[h(x)] / c(subsample))` per row.
    pub fn score(&self, data: &Dataset) -> Vec<f64> {
        const LANES: usize = 8;
        let p = data.n_features();
        let n = data.n_samples();
        let rows = data.rows_flat();
        let norm = average_path_length(self.subsample).max(f64::MIN_POSITIVE);
        let mut total = vec![0.0; n];
        for tree in &self.trees {
            let nodes = &tree.nodes;
            for start in (0..n).step_by(LANES) {
                let base: [usize; LANES] = std::array::from_fn(|l| (start + l).min(n - 1) * p);
                let mut ids = [0u16; LANES];
                for _ in 0..tree.depth {
                    for (id, &b) in ids.iter_mut().zip(&base) {
                        let node = nodes[*id as usize % NODE_CAP];
                        let x = rows[b + node.feature as usize];
                        *id = if x < node.value {
                            node.left
                        } else {
                            node.right
                        };
                    }
                }
                for (t, &id) in total[start..].iter_mut().zip(&ids) {
                    *t += tree.path[id as usize];
                }
            }
        }
        total
            .into_iter()
            .map(|h| 2f64.powf(-(h / self.trees.len() as f64) / norm))
            .collect()
    }

    pub fn tree_stats(&self) -> Vec<TreeStats> {
        self.trees
            .iter()
            .map(|t| {
                let total: usize = t.split_counts.iter().sum();
                let importance = t
                    .split_counts
                    .iter()
                    .map(|&c| {
                        if total > 0 {
                            c as f64 / total as f64
                        } else {
                            0.0
                        }
                    })
                    .collect();
                TreeStats {
                    depth: t.depth,
                    leaves: t.leaves,
                    importance,
                }
            })
            .collect()
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    features: &'a [usize],
    height_limit: usize,
    rng: &'a mut ChaCha8Rng,
    candidates: Vec<usize>,
    nodes: Vec<Node>,
    path: Vec<f64>,
    depth: usize,
    leaves: usize,
    split_counts: Vec<usize>,
}

impl Grower<'_> {
    fn leaf(&mut self, id: usize, depth: usize) -> usize {
        self.leaves += 1;
        self.depth = self.depth.max(depth);
        id
    }

    /// Grows the subtree for `rows`, reordering them in place, and returns
    /// its root id.
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            value: f64::INFINITY,
            feature: 0,
            left: id as u16,
            right: id as u16,
        });
        self.path
            .push(depth as f64 + average_path_length(rows.len()));
        if rows.len() <= 1 || depth >= self.height_limit {
            return self.leaf(id, depth);
        }
        // Draw the split attribute uniformly among the tree's features that
        // vary in this node, computing ranges only for the features drawn.
        self.candidates.clear();
        self.candidates.extend_from_slice(self.features);
        let (feature, lo, hi) = loop {
            if self.candidates.is_empty() {
                return self.leaf(id, depth);
            }
            let pick = self.rng.random_range(0..self.candidates.len());
            let f = self.candidates.swap_remove(pick);
            let col = &self.columns[f];
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(col[r]), hi.max(col[r]))
                });
            if hi > lo {
                break (f, lo, hi);
            }
        };
        let mut threshold = self.rng.random_range(lo..hi);
        if threshold <= lo {
            threshold = 0.5 * (lo + hi);
        }
        let col = &self.columns[feature];
        let mut split = 0;
        for i in 0..rows.len() {
            if col[rows[i]] < threshold {
                rows.swap(i, split);
                split += 1;
            }
        }
        self.split_counts[feature] += 1;
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node {
            value: threshold,
            feature: feature as u32,
            left: left as u16,
            right: right as u16,
        };
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_length_normalizer() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        let c256 = average_path_length(256);
        assert!((c256 - 10.244_770_920_8).abs() < 1e-6, "{c256}");
    }

    #[test]
    fn isolates_planted_point_on_a_line() {
        let mut rows: Vec<Vec<f64>> = (0..99).map(|i| vec![(i % 10) as f64 * 0.01]).collect();
        rows.push(vec![100.0]);
        let d = Dataset::from_rows("line", &rows, None).unwrap();
        for s in 0..20 {
            let scores = IsolationForest::fit(&d, 50, 1.0, s).score(&d);
            let top = crate::stats::argmax(&scores);
            assert_eq!(top, 99);
            assert!(scores[..99].iter().all(|&v| v < scores[99]));
        }
    }

    #[test]
    fn stats_shape() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64, (i * 7 % 13) as f64])
            .collect();
        let d = Dataset::from_rows("s", &rows, None).unwrap();
        let f = IsolationForest::fit(&d, 5, 1.0, 3);
        let stats = f.tree_stats();
        assert_eq!(stats.len(), 5);
        for s in stats {
            assert!(s.depth <= 6);
            assert!(s.leaves >= 2);
            assert!((s.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
