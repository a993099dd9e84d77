use std::path::Path;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};

/// Loads a headered CSV of decimal reals. When `label_column` is given that
/// column is removed from the features and must hold only 0/1.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse {
                    row: 0,
                    column: name.to_owned(),
                    message: "label column not found in header".into(),
                })?,
        ),
        None => None,
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        // Data rows are numbered from 1; row 0 is the header.
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                message: format!("`{field}` is not a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].clone(),
                    message: format!("non-finite value `{field}`"),
                });
            }
            if Some(c) == label_idx {
                let label = match v {
                    0.0 => 0,
                    1.0 => 1,
                    _ => {
                        return Err(Error::Parse {
                            row,
                            column: headers[c].clone(),
                            message: format!("label `{field}` is not 0 or 1"),
                        })
                    }
                };
                labels.push(label);
            } else {
                values.push(v);
            }
        }
        n += 1;
    }

    let p = headers.len() - usize::from(label_idx.is_some());
    let x = DMatrix::from_row_slice(n, p, &values);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, x, label_idx.map(|_| labels))
}

/// Writes features as `f0..f{p-1}` and, when present, labels as `label_column`.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let p = data.n_features();
    let mut header: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    if data.labels().is_some() {
        header.push(label_column.to_owned());
    }
    writer.write_record(&header)?;
    let x = data.x();
    for i in 0..data.n_samples() {
        let mut record: Vec<String> = (0..p).map(|j| format!("{}", x[(i, j)])).collect();
        if let Some(labels) = data.labels() {
            record.push(labels[i].to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn label_column_extracted() {
        let f = write("a,b,is_outlier\n0,0,0\n1,0,0\n9,9,1\n");
        let d = load_csv(f.path(), Some("is_outlier")).unwrap();
        assert_eq!((d.n_samples(), d.n_features()), (3, 2));
        assert_eq!(d.labels(), Some(&[0u8, 0, 1][..]));
        assert_eq!(d.x()[(2, 1)], 9.0);
    }

    #[test]
    fn label_column_as_feature() {
        let f = write("a,b,is_outlier\n0,0,0\n1,0,0\n9,9,1\n");
        let d = load_csv(f.path(), None).unwrap();
        assert_eq!((d.n_samples(), d.n_features()), (3, 3));
        assert!(d.labels().is_none());
    }

    #[test]
    fn nan_cell_is_parse_error() {
        let f = write("a,b\n0,0\n1,NaN\n2,2\n");
        match load_csv(f.path(), None) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_binary_label_rejected() {
        let f = write("a,y\n0,0\n1,2\n2,1\n");
        assert!(matches!(
            load_csv(f.path(), Some("y")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/x.csv", None),
            Err(Error::FileNotFound(_))
        ));
    }

    #[test]
    fn degenerate_labels() {
        let f = write("a,y\n0,0\n1,0\n2,0\n");
        assert!(matches!(
            load_csv(f.path(), Some("y")),
            Err(Error::DegenerateDataset(_))
        ));
    }

    #[test]
    fn write_then_load_is_identity() {
        let rows = vec![vec![0.1, -2.5], vec![1.0 / 3.0, 4.0], vec![7.0, 1e-300]];
        let d = Dataset::from_rows("rt", &rows, Some(vec![0, 1, 0])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&d, &path, "label").unwrap();
        let back = load_csv(&path, Some("label")).unwrap();
        assert_eq!(back, d);
    }
}
