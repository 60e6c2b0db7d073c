//! Serde adapters: matrices as `{rows, cols, data}` in row-major order,
//! vectors as plain arrays. Non-finite entries are rejected on load.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

fn finite<E: serde::de::Error>(data: &[f64]) -> Result<(), E> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(E::custom(format!("non-finite value at position {i}"))),
        None => Ok(()),
    }
}

pub fn to_dense(m: &DMatrix<f64>) -> (usize, usize, Vec<f64>) {
    let mut data = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        data.extend(m.row(i).iter());
    }
    (m.nrows(), m.ncols(), data)
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let (rows, cols, data) = to_dense(m);
        Dense { rows, cols, data }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let m = Dense::deserialize(d)?;
        if m.rows * m.cols != m.data.len() {
            return Err(D::Error::custom(format!(
                "matrix declared {}x{} but has {} entries",
                m.rows,
                m.cols,
                m.data.len()
            )));
        }
        finite(&m.data)?;
        Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
    }
}

pub mod matrix_list {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<Dense> = ms
            .iter()
            .map(|m| {
                let (rows, cols, data) = to_dense(m);
                Dense { rows, cols, data }
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let list = Vec::<Dense>::deserialize(d)?;
        list.into_iter()
            .map(|m| {
                if m.rows * m.cols != m.data.len() {
                    return Err(D::Error::custom("matrix entry count does not match its shape"));
                }
                finite(&m.data)?;
                Ok(DMatrix::from_row_slice(m.rows, m.cols, &m.data))
            })
            .collect()
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        finite(&v)?;
        Ok(DVector::from_vec(v))
    }
}

pub mod vector_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DVector<f64>>, D::Error> {
        let v = Option::<Vec<f64>>::deserialize(d)?;
        match v {
            Some(v) => {
                finite(&v)?;
                Ok(Some(DVector::from_vec(v)))
            }
            None => Ok(None),
        }
    }
}

pub mod vector_list {
    use super::*;

    pub fn serialize<S: Serializer>(vs: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
        let list: Vec<&[f64]> = vs.iter().map(|v| v.as_slice()).collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DVector<f64>>, D::Error> {
        let list = Vec::<Vec<f64>>::deserialize(d)?;
        list.into_iter()
            .map(|v| {
                finite(&v)?;
                Ok(DVector::from_vec(v))
            })
            .collect()
    }
}
