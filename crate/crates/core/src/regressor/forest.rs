use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const TAG_TREE: u64 = 0x7472_6565;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; `None` uses `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 8,
            max_features: None,
            min_samples_split: 2,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// CART regression tree with mean-valued leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                TreeNode::Leaf { value } => return value,
            }
        }
    }

    /// Index of the leaf reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[i]
        {
            i = if x[feature] <= threshold { left } else { right };
        }
        i
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, left).max(walk(nodes, right))
                }
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Builder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(TreeNode::Leaf { value: mean });
        if depth >= self.cfg.max_depth || rows.len() < self.cfg.min_samples_split.max(2) {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows, rng) else {
            return id;
        };
        let col = &self.columns[feature];
        let mut cut = 0;
        for i in 0..rows.len() {
            if col[rows[i]] <= threshold {
                rows.swap(i, cut);
                cut += 1;
            }
        }
        let (l_rows, r_rows) = rows.split_at_mut(cut);
        let left = self.grow(l_rows, depth + 1, rng);
        let right = self.grow(r_rows, depth + 1, rng);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Largest reduction in squared error over at least `mtry` randomly
    /// ordered features; more are tried while none admits a split.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent = total * total / n;
        let mut features: Vec<usize> = (0..self.columns.len()).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let col = &self.columns[f];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for i in 0..order.len() - 1 {
                left_sum += self.y[order[i]];
                let (a, b) = (col[order[i]], col[order[i + 1]]);
                if a == b {
                    continue;
                }
                let nl = (i + 1) as f64;
                let nr = n - nl;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                if best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((gain, f, threshold));
                }
            }
        }
        best.filter(|(g, _, _)| *g > 0.0).map(|(_, f, t)| (f, t))
    }
}

/// Bagged regression trees for one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    /// Fits on the rows of `x` (n × d) against `y`. `stream` separates the
    /// random streams of forests fitted with the same config.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &ForestConfig, stream: u64) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if n == 0 || d == 0 || cfg.n_trees == 0 {
            return Err(Error::InvalidConfig(
                "forest needs rows, features and trees".into(),
            ));
        }
        let columns: Vec<Vec<f64>> = (0..d)
            .map(|j| x.column(j).iter().copied().collect())
            .collect();
        let mtry = cfg
            .max_features
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d);
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(&[cfg.seed, TAG_TREE, stream, t as u64]);
                let mut rows: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    columns: &columns,
                    y,
                    mtry,
                    cfg,
                    nodes: Vec::new(),
                };
                b.grow(&mut rows, 0, &mut rng);
                RegressionTree { nodes: b.nodes }
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Every split threshold on `feature`, across all trees.
    pub fn thresholds(&self, feature: usize) -> Vec<f64> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|node| match *node {
                TreeNode::Split {
                    feature: f,
                    threshold,
                    ..
                } if f == feature => Some(threshold),
                _ => None,
            })
            .collect()
    }
}

/// One independent forest per output dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleRegressor {
    pub n_inputs: usize,
    pub outputs: Vec<RandomForest>,
    pub config: ForestConfig,
}

impl TreeEnsembleRegressor {
    pub fn fit(z: &DMatrix<f64>, u: &DMatrix<f64>, cfg: &ForestConfig) -> Result<Self> {
        if z.nrows() != u.nrows() {
            return Err(Error::LengthMismatch {
                expected: z.nrows(),
                got: u.nrows(),
            });
        }
        let outputs = (0..u.ncols())
            .map(|c| {
                let y: Vec<f64> = u.column(c).iter().copied().collect();
                RandomForest::fit(z, &y, cfg, c as u64)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_inputs: z.ncols(),
            outputs,
            config: cfg.clone(),
        })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn predict(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_inputs {
            return Err(Error::LengthMismatch {
                expected: self.n_inputs,
                got: z.len(),
            });
        }
        Ok(self.outputs.iter().map(|f| f.predict(z)).collect())
    }
}
