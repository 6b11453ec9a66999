//! Serde adapter writing a matrix as a row-major list of rows.
//!
//! Use with `#[serde(with = "crate::numerics::rows")]`. A matrix with zero
//! rows reads back as `0 x 0`; owners that care about such shapes check
//! them after parsing.

use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

use super::{mat_from_rows, mat_to_rows, Mat};

pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(mat_to_rows(m))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
    let rows = Vec::<Vec<f64>>::deserialize(d)?;
    let ncols = rows.first().map_or(0, Vec::len);
    mat_from_rows(&rows, rows.len(), ncols).map_err(D::Error::custom)
}
