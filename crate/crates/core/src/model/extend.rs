use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AffineMatrix, AffineVector, TwoStageProblem};
use crate::{Error, Result};

/// Recourse data with the support constraints folded in as extra recourse
/// variables:
///
/// ```text
/// Q~ = [Q; S],  q~ = [q; -t],  T~(x) = [T(x); 0],  h~(x) = [h(x); 0],
/// W~ = [[W, 0], [0, -I]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedData {
    /// `(N2 + J) x K`.
    #[serde(rename = "Q", with = "super::dense::matrix")]
    pub q_mat: DMatrix<f64>,
    #[serde(with = "super::dense::vector")]
    pub q: DVector<f64>,
    /// `(M + J) x K`.
    pub t: AffineMatrix,
    pub h: AffineVector,
    /// `(M + J) x (N2 + J)`.
    #[serde(rename = "W", with = "super::dense::matrix")]
    pub w: DMatrix<f64>,
}

impl ExtendedData {
    /// Number of extended recourse variables (N2 + J).
    pub fn n(&self) -> usize {
        self.w.ncols()
    }

    /// Number of extended constraint rows (M + J).
    pub fn rows(&self) -> usize {
        self.w.nrows()
    }
}

fn pad_rows(m: &DMatrix<f64>, extra: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows() + extra, m.ncols());
    out.view_mut((0, 0), m.shape()).copy_from(m);
    out
}

pub fn extend(p: &TwoStageProblem) -> Result<ExtendedData> {
    if p.metric.order != 2 {
        return Err(Error::Precondition("the extended data is only defined for the type-2 metric".into()));
    }
    if !p.support.nonnegative {
        return Err(Error::Precondition("the copositive reformulation needs a nonnegative support".into()));
    }
    p.check_dimensions()?;
    let r = &p.recourse;
    let (m, n2, k, j) = (r.m(), r.n2(), p.k(), p.support.rows());

    let mut q_mat = DMatrix::zeros(n2 + j, k);
    q_mat.view_mut((0, 0), (n2, k)).copy_from(&r.q_mat);
    q_mat.view_mut((n2, 0), (j, k)).copy_from(&p.support.s);

    let mut q = DVector::zeros(n2 + j);
    q.rows_mut(0, n2).copy_from(&r.q);
    q.rows_mut(n2, j).copy_from(&(-&p.support.t));

    let mut w = DMatrix::zeros(m + j, n2 + j);
    w.view_mut((0, 0), (m, n2)).copy_from(&r.w);
    for i in 0..j {
        w[(m + i, n2 + i)] = -1.0;
    }

    let t = AffineMatrix { base: pad_rows(&r.t.base, j), slopes: r.t.slopes.iter().map(|s| pad_rows(s, j)).collect() };
    let mut h_base = DVector::zeros(m + j);
    h_base.rows_mut(0, m).copy_from(&r.h.base);
    let h = AffineVector { base: h_base, slope: pad_rows(&r.h.slope, j) };

    Ok(ExtendedData { q_mat, q, t, h, w })
}
