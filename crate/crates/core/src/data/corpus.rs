use std::fs;
use std::path::Path;

use super::{
    load_csv, make_poc_testbed, write_csv, Dataset, TestbedConfig, TestbedEntry, TestbedManifest,
};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "folds.json";
pub const DEFAULT_LABEL_COLUMN: &str = "is_outlier";

/// A directory of datasets, with the testbed manifest when one is present.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub datasets: Vec<Dataset>,
    pub manifest: Option<TestbedManifest>,
}

/// Generates a testbed and writes one CSV per childset plus `folds.json`.
pub fn write_testbed(
    dir: impl AsRef<Path>,
    cfg: &TestbedConfig,
    n_folds: usize,
) -> Result<TestbedManifest> {
    let dir = dir.as_ref();
    let (datasets, folds) = make_poc_testbed(cfg, n_folds)?;
    fs::create_dir_all(dir)?;
    let groups = folds.group_of_dataset.clone().unwrap_or_default();
    let mut entries = Vec::with_capacity(datasets.len());
    for (i, d) in datasets.iter().enumerate() {
        let file = format!("{}.csv", d.name());
        write_csv(d, dir.join(&file), DEFAULT_LABEL_COLUMN)?;
        entries.push(TestbedEntry {
            name: d.name().to_owned(),
            file,
            motherset: groups[i],
            sibling: i % cfg.siblings_per_motherset,
            fold: folds.fold_of_dataset[i],
        });
    }
    let manifest = TestbedManifest {
        config: cfg.clone(),
        n_folds,
        label_column: DEFAULT_LABEL_COLUMN.to_owned(),
        datasets: entries,
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// A file without the label column loads as an unlabeled dataset.
fn load_member(path: &Path, label: &str) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let has_label = reader.headers()?.iter().any(|h| h.trim() == label);
    load_csv(path, has_label.then_some(label))
}

/// Loads the datasets listed in `folds.json`, or else every `*.csv` in name
/// order. `label_column` overrides the manifest's label column.
pub fn load_corpus(dir: impl AsRef<Path>, label_column: Option<&str>) -> Result<Corpus> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        let manifest: TestbedManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
        let label = label_column.unwrap_or(&manifest.label_column);
        let datasets = manifest
            .datasets
            .iter()
            .map(|e| Ok(load_member(&dir.join(&e.file), label)?.with_name(e.name.clone())))
            .collect::<Result<_>>()?;
        return Ok(Corpus {
            datasets,
            manifest: Some(manifest),
        });
    }
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let label = label_column.unwrap_or(DEFAULT_LABEL_COLUMN);
    let datasets = files
        .iter()
        .map(|f| {
            let stem = f
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(load_member(f, label)?.with_name(stem))
        })
        .collect::<Result<Vec<_>>>()?;
    if datasets.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no CSV files in {}",
            dir.display()
        )));
    }
    Ok(Corpus {
        datasets,
        manifest: None,
    })
}
