use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    self, isac_default_clusters, AlorsModel, AsModel, BaselineKind, IsacModel, MetaodCModel,
    SsModel,
};
use crate::data::{Dataset, FoldAssignment};
use crate::detectors::{fit_score, ModelSpec};
use crate::error::{Error, Result};
use crate::metafeatures::MetaFeatureVector;
use crate::metalearner::{select_model, train_from_parts, MetaLearner, TrainConfig};
use crate::rankmf::PerformanceMatrix;
use crate::seed;
use crate::stats::{average_ranks, median};

use super::metrics::wilcoxon_signed_rank;

const TAG_RS_CV: u64 = 0x7273_6376;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    MetaOd,
    Baseline(BaselineKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::MetaOd => f.write_str("METAOD"),
            Method::Baseline(b) => b.fmt(f),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("METAOD") {
            Ok(Method::MetaOd)
        } else {
            s.parse().map(Method::Baseline)
        }
    }
}

/// Parses a comma-separated method list.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in list.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        if ch == ',' && depth == 0 {
            out.push(cur.trim().parse()?);
            cur.clear();
        } else {
            cur.push(ch);
        }
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().parse()?);
    }
    Ok(out)
}

/// Every method of the comparison, without fixed models.
pub fn default_methods() -> Vec<Method> {
    let mut out = vec![Method::MetaOd];
    out.extend(
        [
            BaselineKind::Gb,
            BaselineKind::Isac,
            BaselineKind::As,
            BaselineKind::Ss,
            BaselineKind::Alors,
            BaselineKind::MetaodC,
            BaselineKind::MetaodF,
            BaselineKind::Rs,
            BaselineKind::Eub,
        ]
        .map(Method::Baseline),
    );
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub train: TrainConfig,
    /// ISAC cluster count; `None` uses `ceil(sqrt(n_train))`.
    pub isac_clusters: Option<usize>,
    /// Seed for the random baseline, ME scoring and timing runs.
    pub seed: u64,
    /// Time online selection (extraction included) and the fit of the chosen
    /// model on each test dataset. Needs the datasets.
    pub measure_timing: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            isac_clusters: None,
            seed: 0,
            measure_timing: false,
        }
    }
}

/// Everything a cross-validation run reads. `datasets` is only needed for ME
/// and timing; labels in it are never read.
pub struct CvInputs<'a> {
    pub p: &'a PerformanceMatrix,
    pub meta: &'a [MetaFeatureVector],
    pub folds: &'a FoldAssignment,
    pub models: &'a [ModelSpec],
    pub datasets: Option<&'a [Dataset]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    /// Per test dataset, seconds.
    pub select_seconds: Vec<f64>,
    pub fit_seconds: Vec<f64>,
    pub median_select_seconds: f64,
    pub median_fit_seconds: f64,
    /// Median over datasets of select / fit, in percent.
    pub median_overhead_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    /// Held-out performance per dataset, in dataset order.
    pub ap: Vec<f64>,
    /// Chosen model index per dataset; `None` for methods that do not pick one.
    pub selected: Vec<Option<usize>>,
    pub map: f64,
    pub average_rank: f64,
    /// Summed wall time of the training phase over folds.
    pub train_seconds: f64,
    pub timing: Option<MethodTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_ids: Vec<String>,
    pub methods: Vec<MethodReport>,
    /// Per dataset, the rank of each method (1 is best, ties averaged).
    pub ranks: Vec<Vec<f64>>,
    /// Two-sided signed-rank p-values between method pairs; `None` when there
    /// are too few non-zero differences.
    pub wilcoxon: Vec<Vec<Option<f64>>>,
    pub folds: FoldAssignment,
    pub config: CvConfig,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary: one row per method, then the p-value table.
    pub fn to_table(&self) -> String {
        let width = self
            .methods
            .iter()
            .map(|m| m.method.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9}  {:>10}  {:>12}  {:>10}",
            "method", "MAP", "avg_rank", "train_s", "med_select_s", "overhead_%"
        );
        for m in &self.methods {
            let (sel, pct) = match &m.timing {
                Some(t) => (
                    format!("{:.4}", t.median_select_seconds),
                    format!("{:.2}", t.median_overhead_percent),
                ),
                None => ("-".into(), "-".into()),
            };
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4}  {:>9.3}  {:>10.2}  {:>12}  {:>10}",
                m.method, m.map, m.average_rank, m.train_seconds, sel, pct
            );
        }
        let _ = writeln!(out, "\nWilcoxon signed-rank p-values");
        let _ = write!(out, "{:<width$}", "");
        for m in &self.methods {
            let _ = write!(out, "  {:>w$}", m.method, w = width);
        }
        let _ = writeln!(out);
        for (a, row) in self.wilcoxon.iter().enumerate() {
            let _ = write!(out, "{:<width$}", self.methods[a].method);
            for (b, v) in row.iter().enumerate() {
                let cell = match (a == b, v) {
                    (true, _) => "-".to_owned(),
                    (false, Some(p)) => format!("{p:.4}"),
                    (false, None) => "n/a".to_owned(),
                };
                let _ = write!(out, "  {cell:>width$}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

struct FoldOutcome {
    /// (method index, dataset index, ap, selected).
    cells: Vec<(usize, usize, f64, Option<usize>)>,
    train_seconds: Vec<f64>,
    timing: Vec<(usize, usize, f64, f64)>,
}

fn stack_rows(meta: &[MetaFeatureVector], rows: &[usize]) -> DMatrix<f64> {
    let d = meta.first().map_or(0, |v| v.len());
    DMatrix::from_fn(rows.len(), d, |r, c| meta[rows[r]].0[c])
}

enum Trained {
    Learner(Box<MetaLearner>),
    Gb(usize),
    Isac(IsacModel),
    As(AsModel),
    Ss(SsModel),
    Alors(AlorsModel),
    MetaodC(MetaodCModel),
    Stateless,
}

/// Cross-validation over the datasets of `inputs`. For every fold each
/// method is trained on the training rows only, selects a model for every
/// held-out dataset, and is credited with that model's held-out performance
/// read from `P`.
pub fn run_cv(inputs: &CvInputs<'_>, methods: &[Method], cfg: &CvConfig) -> Result<EvalReport> {
    let n = inputs.p.n_datasets();
    let m = inputs.p.n_models();
    if inputs.meta.len() != n || inputs.folds.n_datasets() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: inputs.meta.len().min(inputs.folds.n_datasets()),
        });
    }
    if inputs.models.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: inputs.models.len(),
        });
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    let needs_data = cfg.measure_timing || methods.contains(&Method::Baseline(BaselineKind::Me));
    if needs_data && inputs.datasets.is_none_or(|d| d.len() != n) {
        return Err(Error::InvalidConfig(
            "ME and timing need the datasets themselves".into(),
        ));
    }
    if methods.contains(&Method::Baseline(BaselineKind::Eub))
        && inputs.folds.group_of_dataset.is_none()
    {
        return Err(Error::InvalidConfig("EUB needs sibling metadata".into()));
    }

    let outcomes: Vec<FoldOutcome> = (0..inputs.folds.n_folds)
        .into_par_iter()
        .map(|fold| run_fold(inputs, methods, cfg, fold))
        .collect::<Result<_>>()?;

    let n_methods = methods.len();
    let mut ap = vec![vec![f64::NAN; n]; n_methods];
    let mut selected = vec![vec![None; n]; n_methods];
    let mut train_seconds = vec![0.0; n_methods];
    let mut timing: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n_methods];
    for o in outcomes {
        for (mi, di, v, s) in o.cells {
            ap[mi][di] = v;
            selected[mi][di] = s;
        }
        for (mi, t) in o.train_seconds.into_iter().enumerate() {
            train_seconds[mi] += t;
        }
        for (mi, di, sel, fit) in o.timing {
            timing[mi].push((di, sel, fit));
        }
    }
    if let Some(di) = (0..n).find(|&di| ap.iter().any(|row| row[di].is_nan())) {
        return Err(Error::InvalidConfig(format!(
            "dataset {} is in no test fold",
            inputs.p.dataset_ids[di]
        )));
    }

    let ranks: Vec<Vec<f64>> = (0..n)
        .map(|di| {
            let neg: Vec<f64> = (0..n_methods).map(|mi| -ap[mi][di]).collect();
            average_ranks(&neg)
        })
        .collect();
    let wilcoxon: Vec<Vec<Option<f64>>> = (0..n_methods)
        .map(|a| {
            (0..n_methods)
                .map(|b| {
                    if a == b {
                        None
                    } else {
                        wilcoxon_signed_rank(&ap[a], &ap[b]).ok()
                    }
                })
                .collect()
        })
        .collect();

    let reports = methods
        .iter()
        .enumerate()
        .map(|(mi, method)| {
            let timing = (!timing[mi].is_empty()).then(|| {
                let mut t = timing[mi].clone();
                t.sort_by_key(|x| x.0);
                let select_seconds: Vec<f64> = t.iter().map(|x| x.1).collect();
                let fit_seconds: Vec<f64> = t.iter().map(|x| x.2).collect();
                let ratios: Vec<f64> = t.iter().map(|x| 100.0 * x.1 / x.2.max(1e-12)).collect();
                MethodTiming {
                    median_select_seconds: median(&select_seconds),
                    median_fit_seconds: median(&fit_seconds),
                    median_overhead_percent: median(&ratios),
                    select_seconds,
                    fit_seconds,
                }
            });
            MethodReport {
                method: method.to_string(),
                map: ap[mi].iter().sum::<f64>() / n as f64,
                average_rank: ranks.iter().map(|r| r[mi]).sum::<f64>() / n as f64,
                ap: ap[mi].clone(),
                selected: selected[mi].clone(),
                train_seconds: train_seconds[mi],
                timing,
            }
        })
        .collect();

    Ok(EvalReport {
        dataset_ids: inputs.p.dataset_ids.clone(),
        methods: reports,
        ranks,
        wilcoxon,
        folds: inputs.folds.clone(),
        config: cfg.clone(),
    })
}

fn run_fold(
    inputs: &CvInputs<'_>,
    methods: &[Method],
    cfg: &CvConfig,
    fold: usize,
) -> Result<FoldOutcome> {
    let train = inputs.folds.train_indices(fold);
    let test = inputs.folds.test_indices(fold);
    let mut out = FoldOutcome {
        cells: Vec::new(),
        train_seconds: vec![0.0; methods.len()],
        timing: Vec::new(),
    };
    if test.is_empty() {
        return Ok(out);
    }
    let p_train = inputs.p.select_rows(&train);
    let m_train = stack_rows(inputs.meta, &train);
    let forest_cfg = cfg.train.forest.clone();
    let k = cfg.train.k;

    for (mi, method) in methods.iter().enumerate() {
        let start = Instant::now();
        let trained = match method {
            Method::MetaOd => Trained::Learner(Box::new(
                train_from_parts(&m_train, &p_train, inputs.models, &cfg.train)?.0,
            )),
            Method::Baseline(kind) => match kind {
                BaselineKind::MetaodF => Trained::Learner(Box::new(baselines::train_metaod_f(
                    &m_train,
                    &p_train,
                    inputs.models,
                    &cfg.train,
                )?)),
                BaselineKind::Gb => Trained::Gb(baselines::gb_select(&p_train.values)),
                BaselineKind::Isac => Trained::Isac(IsacModel::fit(
                    &m_train,
                    &p_train.values,
                    cfg.isac_clusters
                        .unwrap_or_else(|| isac_default_clusters(train.len())),
                    cfg.seed,
                )),
                BaselineKind::As => Trained::As(AsModel::fit(&m_train, &p_train.values)),
                BaselineKind::Ss => {
                    Trained::Ss(SsModel::fit(&m_train, &p_train.values, &forest_cfg)?)
                }
                BaselineKind::Alors => {
                    Trained::Alors(AlorsModel::fit(&m_train, &p_train.values, k, &forest_cfg)?)
                }
                BaselineKind::MetaodC => {
                    Trained::MetaodC(MetaodCModel::fit(&m_train, &p_train.values, k))
                }
                BaselineKind::Me
                | BaselineKind::Rs
                | BaselineKind::Eub
                | BaselineKind::Fixed(_) => Trained::Stateless,
            },
        };
        out.train_seconds[mi] = start.elapsed().as_secs_f64();

        for &di in &test {
            let features = &inputs.meta[di];
            let x = features.as_slice();
            let pick = match (&trained, method) {
                (Trained::Learner(l), _) => Some(l.select_from_features(features)?.chosen.index),
                (Trained::Gb(j), _) => Some(*j),
                (Trained::Isac(t), _) => Some(t.select(x)),
                (Trained::As(t), _) => Some(t.select(x)),
                (Trained::Ss(t), _) => Some(t.select(x)),
                (Trained::Alors(t), _) => Some(t.select(x)?),
                (Trained::MetaodC(t), _) => Some(t.select(x)),
                (Trained::Stateless, Method::Baseline(BaselineKind::Rs)) => {
                    Some(baselines::rs_select(
                        inputs.models.len(),
                        seed::mix(&[cfg.seed, TAG_RS_CV, di as u64]),
                    ))
                }
                (Trained::Stateless, Method::Baseline(BaselineKind::Fixed(spec))) => {
                    Some(spec.index)
                }
                _ => None,
            };
            let value = match (pick, method) {
                (Some(j), _) => inputs.p.values[(di, j)],
                (None, Method::Baseline(BaselineKind::Eub)) => {
                    let siblings = inputs.folds.siblings_of(di).unwrap_or_default();
                    baselines::eub_value(&inputs.p.values, di, &siblings)?
                }
                (None, Method::Baseline(BaselineKind::Me)) => {
                    let data = &inputs.datasets.expect("checked above")[di];
                    let labels = data
                        .labels()
                        .ok_or_else(|| Error::Unlabeled(data.name().to_owned()))?;
                    let scores =
                        baselines::me_score(inputs.models, &data.without_labels(), cfg.seed)?;
                    super::average_precision(scores.as_slice(), labels)?
                }
                (None, _) => unreachable!("every other method picks a model"),
            };
            out.cells.push((mi, di, value, pick));

            if cfg.measure_timing {
                if let Trained::Learner(l) = &trained {
                    let data = inputs.datasets.expect("checked above")[di].without_labels();
                    let start = Instant::now();
                    let sel = select_model(l, &data, cfg.seed)?;
                    let select_s = start.elapsed().as_secs_f64();
                    let start = Instant::now();
                    fit_score(&sel.chosen, &data, cfg.seed)?;
                    out.timing
                        .push((mi, di, select_s, start.elapsed().as_secs_f64()));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::enumerate_model_set;

    fn planted(
        n: usize,
        groups: usize,
    ) -> (PerformanceMatrix, Vec<MetaFeatureVector>, FoldAssignment) {
        let models = enumerate_model_set();
        let m = models.len();
        let mut rng = seed::rng(&[42]);
        use rand::Rng;
        let values = DMatrix::from_fn(n, m, |_, j| {
            if j == 17 {
                0.9
            } else {
                rng.random_range(0.0..0.5)
            }
        });
        let p = PerformanceMatrix::new(
            values,
            (0..n).map(|i| format!("d{i}")).collect(),
            models.iter().map(|s| s.id()).collect(),
        )
        .unwrap();
        let meta = (0..n)
            .map(|i| MetaFeatureVector((0..6).map(|c| ((i * 7 + c * 3) % 11) as f64).collect()))
            .collect();
        let folds = FoldAssignment {
            n_folds: n / groups,
            fold_of_dataset: (0..n).map(|i| i % (n / groups)).collect(),
            group_of_dataset: Some((0..n).map(|i| i / (n / groups)).collect()),
        };
        (p, meta, folds)
    }

    #[test]
    fn dominant_model_gb_beats_rs() {
        let (p, meta, folds) = planted(8, 2);
        let models = enumerate_model_set();
        let inputs = CvInputs {
            p: &p,
            meta: &meta,
            folds: &folds,
            models: &models,
            datasets: None,
        };
        let methods = parse_methods("GB,RS,EUB,FIXED(17)").unwrap();
        let report = run_cv(&inputs, &methods, &CvConfig::default()).unwrap();
        let gb = report.method("GB").unwrap();
        assert!((gb.map - 0.9).abs() < 1e-12);
        assert!(gb.map >= report.method("RS").unwrap().map);
        assert!((report.method("EUB").unwrap().map - 0.9).abs() < 1e-12);
        for r in &report.ranks {
            let k = methods.len() as f64;
            assert!((r.iter().sum::<f64>() - k * (k + 1.0) / 2.0).abs() < 1e-12);
        }
        assert!(report.to_table().contains("GB"));
    }

    #[test]
    fn leave_one_out_layout() {
        let folds = FoldAssignment::leave_one_out(8);
        assert_eq!(folds.n_folds, 8);
        for f in 0..8 {
            assert_eq!(folds.test_indices(f), vec![f]);
        }
        let (p, meta, _) = planted(8, 2);
        let models = enumerate_model_set();
        let inputs = CvInputs {
            p: &p,
            meta: &meta,
            folds: &folds,
            models: &models,
            datasets: None,
        };
        let report = run_cv(
            &inputs,
            &parse_methods("GB,AS,ISAC").unwrap(),
            &CvConfig::default(),
        )
        .unwrap();
        assert_eq!(report.methods[0].ap.len(), 8);
        assert!(matches!(
            run_cv(
                &inputs,
                &parse_methods("EUB").unwrap(),
                &CvConfig::default()
            ),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn method_list_parsing() {
        let m = parse_methods("METAOD, gb,FIXED(3),RS").unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m[0], Method::MetaOd);
        assert!(matches!(
            parse_methods("GB,NOPE"),
            Err(Error::UnknownMethod(_))
        ));
    }
}
