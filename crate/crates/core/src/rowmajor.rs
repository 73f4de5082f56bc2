//! Serde helpers that store matrices as arrays of rows.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Serialize, Deserialize)]
struct Repr {
    rows: usize,
    cols: usize,
    data: Vec<Vec<f64>>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    Repr {
        rows: m.nrows(),
        cols: m.ncols(),
        data: to_rows(m),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let repr = Repr::deserialize(d)?;
    if repr.data.len() != repr.rows {
        return Err(D::Error::custom("row count does not match data"));
    }
    from_rows(&repr.data, repr.cols).ok_or_else(|| D::Error::custom("ragged matrix rows"))
}
