//! Serde adapters for complex matrices.
//!
//! A complex number is a `[re, im]` pair. Model files nest matrices row by
//! row; hybrid-density files store each block as one flat row-major list.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMatrix, C64};

fn to_rows(m: &CMatrix) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
}

fn from_rows<E: serde::de::Error>(rows: Vec<Vec<C64>>) -> Result<CMatrix, E> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(E::custom("ragged matrix rows"));
    }
    let flat: Vec<C64> = rows.into_iter().flatten().collect();
    Ok(CMatrix::from_row_slice(nr, nc, &flat))
}

fn from_flat<E: serde::de::Error>(flat: Vec<C64>) -> Result<CMatrix, E> {
    let d = (flat.len() as f64).sqrt().round() as usize;
    if d * d != flat.len() {
        return Err(E::custom(format!("block of length {} is not square", flat.len())));
    }
    Ok(CMatrix::from_row_slice(d, d, &flat))
}

pub fn row_major(m: &CMatrix) -> Vec<C64> {
    to_rows(m).into_iter().flatten().collect()
}

/// Nested `[[ [re,im], … ], …]`.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        from_rows(Vec::<Vec<C64>>::deserialize(d)?)
    }
}

pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        Vec::<Vec<Vec<C64>>>::deserialize(d)?
            .into_iter()
            .map(from_rows)
            .collect()
    }
}

/// Each block as a flat row-major `[ [re,im], … ]`.
pub mod flat_blocks {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(row_major).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        Vec::<Vec<C64>>::deserialize(d)?
            .into_iter()
            .map(from_flat)
            .collect()
    }
}

/// Real matrix as nested rows of numbers.
pub mod real_matrix {
    use super::*;
    use nalgebra::DMatrix;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        (0..m.nrows())
            .map(|r| m.row(r).iter().cloned().collect::<Vec<f64>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(DMatrix::from_row_slice(nr, nc, &flat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    #[derive(Serialize, Deserialize)]
    struct Wrap {
        #[serde(with = "matrix")]
        m: CMatrix,
        #[serde(with = "flat_blocks")]
        b: Vec<CMatrix>,
    }

    #[test]
    fn nested_and_flat_layouts() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 2.), c(3., 0.), c(0., -4.)]);
        let w = Wrap { m: m.clone(), b: vec![m.clone()] };
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(
            s,
            r#"{"m":[[[1.0,0.0],[0.0,2.0]],[[3.0,0.0],[0.0,-4.0]]],"b":[[[1.0,0.0],[0.0,2.0],[3.0,0.0],[0.0,-4.0]]]}"#
        );
        let back: Wrap = serde_json::from_str(&s).unwrap();
        assert_eq!(back.m, m);
        assert_eq!(back.b[0], m);
    }

    #[test]
    fn reals_round_trip_bit_exact() {
        let x = 0.1 + 0.2;
        let m = CMatrix::from_row_slice(1, 1, &[c(x, std::f64::consts::PI / 3.0)]);
        let w = Wrap { m: m.clone(), b: vec![] };
        let back: Wrap = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(back.m[(0, 0)].re.to_bits(), x.to_bits());
        assert_eq!(back.m[(0, 0)].im.to_bits(), (std::f64::consts::PI / 3.0).to_bits());
    }

    #[test]
    fn rejects_non_square_block() {
        let s = r#"{"m":[[[1.0,0.0]]],"b":[[[1.0,0.0],[0.0,2.0],[3.0,0.0]]]}"#;
        assert!(serde_json::from_str::<Wrap>(s).is_err());
    }
}
