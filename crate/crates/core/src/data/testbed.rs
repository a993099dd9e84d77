//! Synthetic motherset / childset testbed.
//!
//! Each motherset is a labeled pool drawn from its own Gaussian mixture with
//! its own outlier pattern; childsets ("siblings") are subsamples of one
//! motherset at a fixed outlier frequency. Siblings therefore share outlying
//! structure while childsets of different mothersets do not.
//!
//! Point difficulty is expressed only through the distance at which outlier
//! clusters are placed from the normal mass (drawn per motherset); there is
//! no oracle-classifier difficulty score.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed;

const TAG_MOTHER: u64 = 0x6d6f_7468;
const TAG_CHILD: u64 = 0x6368_696c;
const MIXTURE_COMPONENTS: usize = 3;
const MOTHER_SIZE_FACTOR: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    pub n_mothersets: usize,
    pub siblings_per_motherset: usize,
    pub samples_per_childset: usize,
    pub dims: usize,
    /// Outlier frequency in (0, 0.5).
    pub outlier_frequency: f64,
    /// 0 scatters outliers uniformly; larger values pack them into tighter clusters.
    pub clusteredness: f64,
    /// Fraction of columns replaced by label-independent noise, in [0, 1).
    pub irrelevant_feature_fraction: f64,
    pub seed: u64,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            n_mothersets: 10,
            siblings_per_motherset: 5,
            samples_per_childset: 500,
            dims: 10,
            outlier_frequency: 0.05,
            clusteredness: 1.0,
            irrelevant_feature_fraction: 0.0,
            seed: 0,
        }
    }
}

impl TestbedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.n_mothersets == 0 {
            return bad("n_mothersets must be >= 1");
        }
        if self.siblings_per_motherset == 0 {
            return bad("siblings_per_motherset must be >= 1");
        }
        if self.dims == 0 {
            return bad("dims must be >= 1");
        }
        if !(self.outlier_frequency > 0.0 && self.outlier_frequency < 0.5) {
            return bad("outlier_frequency must lie in (0, 0.5)");
        }
        if self.outlier_frequency * (self.samples_per_childset as f64) < 1.0 {
            return bad("outlier_frequency * samples_per_childset must be >= 1");
        }
        if self.samples_per_childset < 3 {
            return bad("samples_per_childset must be >= 3");
        }
        if !(self.clusteredness >= 0.0 && self.clusteredness.is_finite()) {
            return bad("clusteredness must be a finite real >= 0");
        }
        if !(0.0..1.0).contains(&self.irrelevant_feature_fraction) {
            return bad("irrelevant_feature_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Number of trailing noise columns in every generated dataset.
    pub fn n_irrelevant(&self) -> usize {
        let k = (self.irrelevant_feature_fraction * self.dims as f64).round() as usize;
        k.min(self.dims - 1)
    }

    pub fn motherset_size(&self) -> usize {
        MOTHER_SIZE_FACTOR * self.samples_per_childset
    }
}

struct Component {
    mean: DVector<f64>,
    /// Lower-triangular-ish mixing matrix; samples are mean + L z.
    mixing: DMatrix<f64>,
    scale: f64,
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn random_component(rng: &mut ChaCha8Rng, dims: usize) -> Component {
    let mean = DVector::from_fn(dims, |_, _| rng.random_range(-6.0..6.0));
    let scale = rng.random_range(0.3..1.6);
    let mut mixing = DMatrix::from_fn(dims, dims, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        0.35 * z
    });
    for d in 0..dims {
        mixing[(d, d)] += rng.random_range(0.5..1.5);
    }
    mixing *= scale;
    Component {
        mean,
        mixing,
        scale,
    }
}

/// Generates the labeled pool for one motherset. Output is a pure function of
/// `(cfg, motherset_id)`; rows are shuffled so labels are not ordered.
pub fn generate_motherset(cfg: &TestbedConfig, motherset_id: usize) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = seed::rng(&[cfg.seed, TAG_MOTHER, motherset_id as u64]);
    let total = cfg.motherset_size();
    let n_out = ((cfg.outlier_frequency * total as f64).round() as usize).max(1);
    let n_norm = total - n_out;
    let n_noise = cfg.n_irrelevant();
    let rel = cfg.dims - n_noise;

    let components: Vec<Component> = (0..MIXTURE_COMPONENTS)
        .map(|_| random_component(&mut rng, rel))
        .collect();
    let raw_weights: Vec<f64> = (0..MIXTURE_COMPONENTS)
        .map(|_| rng.random_range(0.2..1.0))
        .collect();
    let weight_sum: f64 = raw_weights.iter().sum();

    let mut rows: Vec<DVector<f64>> = Vec::with_capacity(total);
    for _ in 0..n_norm {
        let mut u = rng.random::<f64>() * weight_sum;
        let mut c = 0;
        while c + 1 < MIXTURE_COMPONENTS && u >= raw_weights[c] {
            u -= raw_weights[c];
            c += 1;
        }
        let comp = &components[c];
        let z = standard_normal_vec(&mut rng, rel);
        rows.push(&comp.mean + &comp.mixing * z);
    }

    if cfg.clusteredness == 0.0 {
        // Scattered outliers: uniform in the normals' bounding box widened by 50%.
        let mut lo = vec![f64::INFINITY; rel];
        let mut hi = vec![f64::NEG_INFINITY; rel];
        for r in &rows {
            for d in 0..rel {
                lo[d] = lo[d].min(r[d]);
                hi[d] = hi[d].max(r[d]);
            }
        }
        for _ in 0..n_out {
            let v = DVector::from_fn(rel, |d, _| {
                let pad = 0.25 * (hi[d] - lo[d]);
                rng.random_range((lo[d] - pad)..(hi[d] + pad + f64::EPSILON))
            });
            rows.push(v);
        }
    } else {
        // Clustered outliers placed away from the normal components. The
        // placement distance (difficulty proxy) and the cluster count vary per
        // motherset so different mothersets favour different detectors.
        let n_clusters = rng.random_range(1..=3usize).min(n_out);
        let distance = rng.random_range(2.0..7.0);
        let tightness = cfg.clusteredness * rng.random_range(0.5..2.0);
        let centers: Vec<(DVector<f64>, f64)> = (0..n_clusters)
            .map(|_| {
                let anchor = &components[rng.random_range(0..MIXTURE_COMPONENTS)];
                let dir = standard_normal_vec(&mut rng, rel).normalize();
                let reach = distance * anchor.scale * (rel as f64).sqrt();
                let center = &anchor.mean + dir * reach;
                (center, anchor.scale / tightness)
            })
            .collect();
        for o in 0..n_out {
            let (center, spread) = &centers[o % n_clusters];
            let z = standard_normal_vec(&mut rng, rel);
            rows.push(center + z * *spread);
        }
    }

    let mut labels: Vec<u8> = vec![0; n_norm];
    labels.extend(std::iter::repeat_n(1u8, n_out));
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);

    let mut x = DMatrix::zeros(total, cfg.dims);
    let mut out_labels = Vec::with_capacity(total);
    for (i, &src) in order.iter().enumerate() {
        for d in 0..rel {
            x[(i, d)] = rows[src][d];
        }
        out_labels.push(labels[src]);
    }
    for i in 0..total {
        for d in rel..cfg.dims {
            x[(i, d)] = StandardNormal.sample(&mut rng);
        }
    }
    Dataset::new(format!("mother{motherset_id:03}"), x, Some(out_labels))
}

/// Draws one childset (sibling) from a motherset, without replacement, at
/// `cfg.outlier_frequency`. Deterministic in `(cfg.seed, mother.name, sibling_id)`.
pub fn sample_childset(
    mother: &Dataset,
    cfg: &TestbedConfig,
    sibling_id: usize,
) -> Result<Dataset> {
    let labels = mother
        .labels()
        .ok_or_else(|| Error::Unlabeled(mother.name().to_owned()))?;
    let size = cfg.samples_per_childset;
    if size > mother.n_samples() {
        return Err(Error::InsufficientSamples {
            requested: size,
            available: mother.n_samples(),
        });
    }
    let outliers: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let normals: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let want_out = ((cfg.outlier_frequency * size as f64).round() as usize).max(1);
    let want_norm = size - want_out;
    if want_out > outliers.len() {
        return Err(Error::InsufficientSamples {
            requested: want_out,
            available: outliers.len(),
        });
    }
    if want_norm > normals.len() {
        return Err(Error::InsufficientSamples {
            requested: want_norm,
            available: normals.len(),
        });
    }

    let mut rng = seed::rng(&[
        cfg.seed,
        TAG_CHILD,
        seed::hash_str(mother.name()),
        sibling_id as u64,
    ]);
    let mut rows: Vec<usize> = index::sample(&mut rng, outliers.len(), want_out)
        .into_iter()
        .map(|i| outliers[i])
        .chain(
            index::sample(&mut rng, normals.len(), want_norm)
                .into_iter()
                .map(|i| normals[i]),
        )
        .collect();
    rows.shuffle(&mut rng);
    mother.select_rows(format!("{}_sib{sibling_id}", mother.name()), &rows)
}

/// Dataset-to-fold map, with optional group ids (the motherset of each
/// dataset) used for sibling lookups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub fold_of_dataset: Vec<usize>,
    pub group_of_dataset: Option<Vec<usize>>,
}

impl FoldAssignment {
    pub fn leave_one_out(n: usize) -> Self {
        Self {
            n_folds: n,
            fold_of_dataset: (0..n).collect(),
            group_of_dataset: None,
        }
    }

    pub fn n_datasets(&self) -> usize {
        self.fold_of_dataset.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_datasets())
            .filter(|&i| self.fold_of_dataset[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n_datasets())
            .filter(|&i| self.fold_of_dataset[i] != fold)
            .collect()
    }

    /// Other datasets sharing `i`'s group, or `None` without group metadata.
    pub fn siblings_of(&self, i: usize) -> Option<Vec<usize>> {
        let groups = self.group_of_dataset.as_ref()?;
        Some(
            (0..groups.len())
                .filter(|&j| j != i && groups[j] == groups[i])
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedEntry {
    pub name: String,
    pub file: String,
    pub motherset: usize,
    pub sibling: usize,
    pub fold: usize,
}

/// On-disk description of a generated testbed (`folds.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedManifest {
    pub config: TestbedConfig,
    pub n_folds: usize,
    pub label_column: String,
    pub datasets: Vec<TestbedEntry>,
}

impl TestbedManifest {
    pub fn folds(&self) -> FoldAssignment {
        FoldAssignment {
            n_folds: self.n_folds,
            fold_of_dataset: self.datasets.iter().map(|d| d.fold).collect(),
            group_of_dataset: Some(self.datasets.iter().map(|d| d.motherset).collect()),
        }
    }
}

/// Builds `n_mothersets * siblings_per_motherset` childsets. Sibling `s` of
/// every motherset goes to fold `s % n_folds`, so each test fold holds the
/// same number of siblings from every motherset and the remaining siblings
/// stay on the train side.
pub fn make_poc_testbed(
    cfg: &TestbedConfig,
    n_folds: usize,
) -> Result<(Vec<Dataset>, FoldAssignment)> {
    cfg.validate()?;
    if n_folds == 0 || cfg.siblings_per_motherset % n_folds != 0 {
        return Err(Error::InvalidConfig(format!(
            "n_folds ({n_folds}) must divide siblings_per_motherset ({})",
            cfg.siblings_per_motherset
        )));
    }
    let mut datasets = Vec::with_capacity(cfg.n_mothersets * cfg.siblings_per_motherset);
    let mut folds = Vec::new();
    let mut groups = Vec::new();
    for m in 0..cfg.n_mothersets {
        let mother = generate_motherset(cfg, m)?;
        for s in 0..cfg.siblings_per_motherset {
            datasets.push(sample_childset(&mother, cfg, s)?);
            folds.push(s % n_folds);
            groups.push(m);
        }
    }
    Ok((
        datasets,
        FoldAssignment {
            n_folds,
            fold_of_dataset: folds,
            group_of_dataset: Some(groups),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TestbedConfig {
        TestbedConfig {
            n_mothersets: 3,
            siblings_per_motherset: 5,
            samples_per_childset: 200,
            dims: 4,
            outlier_frequency: 0.1,
            clusteredness: 1.0,
            irrelevant_feature_fraction: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn motherset_is_deterministic() {
        let cfg = small_cfg();
        let a = generate_motherset(&cfg, 0).unwrap();
        let b = generate_motherset(&cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x(), generate_motherset(&cfg, 1).unwrap().x());
    }

    #[test]
    fn motherset_outlier_fraction() {
        for clusteredness in [0.0, 1.0, 3.0] {
            let cfg = TestbedConfig {
                clusteredness,
                ..small_cfg()
            };
            let m = generate_motherset(&cfg, 2).unwrap();
            assert_eq!(m.n_samples(), 2000);
            let frac = m.outlier_fraction().unwrap();
            assert!((frac - 0.1).abs() <= 0.02, "fraction {frac}");
        }
    }

    #[test]
    fn childset_outlier_count() {
        let cfg = TestbedConfig {
            outlier_frequency: 0.05,
            ..small_cfg()
        };
        let mother = generate_motherset(&cfg, 0).unwrap();
        // Trim the mother to exactly 20 outliers.
        let labels = mother.labels().unwrap();
        let mut keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        keep.extend((0..labels.len()).filter(|&i| labels[i] == 1).take(20));
        let trimmed = mother.select_rows("trimmed", &keep).unwrap();
        let child = sample_childset(&trimmed, &cfg, 0).unwrap();
        let outliers = child.labels().unwrap().iter().filter(|&&l| l == 1).count();
        assert!((9..=11).contains(&outliers), "{outliers}");
        assert_eq!(child.n_samples(), 200);
    }

    #[test]
    fn siblings_differ() {
        let cfg = small_cfg();
        let mother = generate_motherset(&cfg, 0).unwrap();
        let a = sample_childset(&mother, &cfg, 0).unwrap();
        let b = sample_childset(&mother, &cfg, 1).unwrap();
        assert_ne!(a.x(), b.x());
        assert_eq!(a, sample_childset(&mother, &cfg, 0).unwrap());
    }

    #[test]
    fn oversized_request() {
        let cfg = small_cfg();
        let mother = generate_motherset(&cfg, 0).unwrap();
        let tiny = mother
            .select_rows("tiny", &(0..100).collect::<Vec<_>>())
            .unwrap();
        assert!(matches!(
            sample_childset(&tiny, &cfg, 0),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn sampling_preserves_labels() {
        let cfg = small_cfg();
        let mother = generate_motherset(&cfg, 1).unwrap();
        let child = sample_childset(&mother, &cfg, 3).unwrap();
        // Every child row must appear in the mother with the same label.
        let mrows = mother.rows_flat();
        let p = mother.n_features();
        for i in 0..child.n_samples() {
            let row: Vec<f64> = child.x().row(i).iter().copied().collect();
            let src = (0..mother.n_samples())
                .find(|&r| mrows[r * p..(r + 1) * p] == row[..])
                .expect("row not found in mother");
            assert_eq!(mother.labels().unwrap()[src], child.labels().unwrap()[i]);
        }
    }

    #[test]
    fn poc_folds_partition() {
        let cfg = TestbedConfig {
            n_mothersets: 10,
            siblings_per_motherset: 5,
            samples_per_childset: 60,
            ..small_cfg()
        };
        let (datasets, folds) = make_poc_testbed(&cfg, 5).unwrap();
        assert_eq!(datasets.len(), 50);
        let mut seen = vec![0; 50];
        for f in 0..5 {
            let test = folds.test_indices(f);
            assert_eq!(test.len(), 10);
            let groups = folds.group_of_dataset.as_ref().unwrap();
            let mut g: Vec<usize> = test.iter().map(|&i| groups[i]).collect();
            g.sort();
            g.dedup();
            assert_eq!(g.len(), 10, "two test datasets share a motherset");
            for &i in &test {
                seen[i] += 1;
                for s in folds.siblings_of(i).unwrap() {
                    assert_ne!(folds.fold_of_dataset[s], f);
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small_cfg();
        cfg.outlier_frequency = 0.6;
        assert!(generate_motherset(&cfg, 0).is_err());
        let cfg = small_cfg();
        assert!(make_poc_testbed(&cfg, 3).is_err());
    }
}
