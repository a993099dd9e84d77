//! Serializes a `DMatrix<f64>` as `{"n_cols": c, "rows": [[...], ...]}`.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Rows {
    n_cols: usize,
    rows: Vec<Vec<f64>>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    Rows {
        n_cols: m.ncols(),
        rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let Rows { n_cols, rows } = Rows::deserialize(d)?;
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(D::Error::custom("ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), n_cols, &flat))
}
