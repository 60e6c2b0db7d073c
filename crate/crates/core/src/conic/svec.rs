use nalgebra::DMatrix;

use crate::{Error, Result};

/// Length of `svec` for a side-`k` symmetric matrix.
pub fn svec_len(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Position of entry `(i, j)` in `svec` order (upper triangle, column-major).
///
/// Entries are enumerated as (0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...
pub fn svec_index(i: usize, j: usize) -> usize {
    let (r, c) = if i <= j { (i, j) } else { (j, i) };
    c * (c + 1) / 2 + r
}

/// Inner-product preserving vectorization: off-diagonal entries are scaled by
/// sqrt(2), so `svec(A) . svec(B) = trace(A B)`.
pub fn svec(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let k = m.nrows();
    if m.ncols() != k {
        return Err(Error::Dimension(format!("svec of a {}x{} matrix", k, m.ncols())));
    }
    let mut asym: f64 = 0.0;
    for i in 0..k {
        for j in 0..i {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let mut out = vec![0.0; svec_len(k)];
    for c in 0..k {
        for r in 0..=c {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            out[svec_index(r, c)] = if r == c { v } else { v * std::f64::consts::SQRT_2 };
        }
    }
    Ok(out)
}

/// Inverse of [`svec`].
pub fn smat(v: &[f64]) -> Result<DMatrix<f64>> {
    // k(k+1)/2 = n
    let k = ((((8 * v.len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if svec_len(k) != v.len() {
        return Err(Error::Dimension(format!("{} is not a triangular number", v.len())));
    }
    let mut m = DMatrix::zeros(k, k);
    for c in 0..k {
        for r in 0..=c {
            let x = v[svec_index(r, c)];
            if r == c {
                m[(r, c)] = x;
            } else {
                let x = x / std::f64::consts::SQRT_2;
                m[(r, c)] = x;
                m[(c, r)] = x;
            }
        }
    }
    Ok(m)
}
