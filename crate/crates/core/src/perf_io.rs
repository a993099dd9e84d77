//! Performance-matrix files and resumable construction.
//!
//! The matrix is a CSV with a `dataset` column followed by one column per
//! model id. While it is being built, every finished cell is appended to a
//! journal (`<out>.journal`) so an interrupted build resumes where it stopped.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::detectors::{ap_trials, ModelSpec, PreparedData};
use crate::error::{Error, Result};
use crate::rankmf::PerformanceMatrix;

pub fn write_performance_csv(p: &PerformanceMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["dataset".to_owned()];
    header.extend(p.model_ids.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in p.dataset_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(p.values.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_performance_csv(path: impl AsRef<Path>) -> Result<PerformanceMatrix> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let model_ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut dataset_ids = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != model_ids.len() + 1 {
            return Err(Error::Parse {
                row: row + 1,
                column: format!("field {}", rec.len()),
                message: format!("expected {} fields", model_ids.len() + 1),
            });
        }
        dataset_ids.push(rec[0].to_owned());
        for (c, cell) in rec.iter().skip(1).enumerate() {
            values.push(cell.trim().parse::<f64>().map_err(|e| Error::Parse {
                row: row + 1,
                column: model_ids[c].clone(),
                message: e.to_string(),
            })?);
        }
    }
    let n = dataset_ids.len();
    let m = model_ids.len();
    PerformanceMatrix::new(
        DMatrix::from_row_slice(n, m, &values),
        dataset_ids,
        model_ids,
    )
}

pub fn journal_path(out: impl AsRef<Path>) -> PathBuf {
    let mut s = out.as_ref().as_os_str().to_owned();
    s.push(".journal");
    PathBuf::from(s)
}

fn journal_header(models: &[ModelSpec], n_trials: usize, base_seed: u64) -> String {
    format!(
        "# trials={n_trials} seed={base_seed} models={}",
        models.len()
    )
}

/// Builds the matrix cell by cell, appending each finished cell to
/// `journal` as `dataset<TAB>model index<TAB>value` and skipping cells
/// already recorded there. The result equals an uninterrupted build.
pub fn build_performance_matrix_resumable(
    corpus: &[Dataset],
    models: &[ModelSpec],
    n_trials: usize,
    base_seed: u64,
    journal: impl AsRef<Path>,
) -> Result<PerformanceMatrix> {
    let journal = journal.as_ref();
    if let Some(d) = corpus.iter().find(|d| d.labels().is_none()) {
        return Err(Error::Unlabeled(d.name().to_owned()));
    }
    let header = journal_header(models, n_trials, base_seed);
    let mut done: HashMap<(String, usize), f64> = HashMap::new();
    if journal.exists() {
        let file = BufReader::new(fs::File::open(journal)?);
        let mut lines = file.lines();
        match lines.next().transpose()? {
            Some(h) if h == header => {}
            Some(h) => {
                return Err(Error::InvalidConfig(format!(
                    "journal {} was written with different settings ({h})",
                    journal.display()
                )))
            }
            None => {}
        }
        for line in lines {
            let line = line?;
            let mut parts = line.split('\t');
            // A torn final line from an interrupted write is ignored.
            let (Some(name), Some(j), Some(v), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                continue;
            };
            if let (Ok(j), Ok(v)) = (j.parse::<usize>(), v.parse::<f64>()) {
                done.insert((name.to_owned(), j), v);
            }
        }
    }
    let mut file = OpenOptions::new().create(true).append(true).open(journal)?;
    if file.metadata()?.len() == 0 {
        writeln!(file, "{header}")?;
    } else {
        // Start on a fresh line in case the last write was torn.
        writeln!(file)?;
    }
    let writer = Mutex::new(file);

    let mut values = DMatrix::zeros(corpus.len(), models.len());
    for (i, data) in corpus.iter().enumerate() {
        let prepared = PreparedData::new(data);
        let row: Vec<f64> = models
            .par_iter()
            .enumerate()
            .map(|(j, spec)| {
                if let Some(&v) = done.get(&(data.name().to_owned(), j)) {
                    return Ok(v);
                }
                let v = ap_trials(&prepared, &spec.detector, n_trials, base_seed)?;
                let mut w = writer.lock().expect("journal writer");
                writeln!(w, "{}\t{j}\t{v}", data.name())?;
                Ok(v)
            })
            .collect::<Result<_>>()?;
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    writer.into_inner().expect("journal writer").flush()?;
    PerformanceMatrix::new(
        values,
        corpus.iter().map(|d| d.name().to_owned()).collect(),
        models.iter().map(|s| s.id()).collect(),
    )
}
