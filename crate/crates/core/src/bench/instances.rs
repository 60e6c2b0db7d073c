use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::oracles::SumMaxRecourse;
use crate::{Error, Result};

/// Random correlation matrix with a random spectrum: eigenvalues drawn
/// uniformly and rescaled to sum to `k`, a Haar-random orthogonal
/// conjugation, then Givens rotations that set the diagonal to one while
/// preserving the spectrum.
pub fn random_correlation<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    if k <= 1 {
        return DMatrix::identity(k, k);
    }
    let mut eig: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = eig.iter().sum();
    eig.iter_mut().for_each(|e| *e *= k as f64 / total);

    let g: DMatrix<f64> = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut *rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..k {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    let mut a = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    a = (&a + a.transpose()) * 0.5;

    for _ in 0..k {
        let Some(i) = (0..k).find(|&i| (a[(i, i)] - 1.0).abs() > 1e-14) else { break };
        // Pair an entry below one with an entry above one (or vice versa).
        let below = a[(i, i)] < 1.0;
        let Some(j) = (0..k).find(|&j| j != i && (a[(j, j)] > 1.0) == below && (a[(j, j)] - 1.0).abs() > 1e-14) else {
            break;
        };
        let (aii, ajj, aij) = (a[(i, i)], a[(j, j)], a[(i, j)]);
        let disc = (aij * aij - (aii - 1.0) * (ajj - 1.0)).max(0.0).sqrt();
        let t = (aij + if aij >= 0.0 { disc } else { -disc }) / (ajj - 1.0);
        let c = 1.0 / (1.0 + t * t).sqrt();
        let s = c * t;
        let mut rot = DMatrix::identity(k, k);
        rot[(i, i)] = c;
        rot[(j, j)] = c;
        rot[(i, j)] = s;
        rot[(j, i)] = -s;
        a = rot.transpose() * &a * &rot;
        a[(i, i)] = 1.0;
    }
    a = (&a + a.transpose()) * 0.5;
    for i in 0..k {
        a[(i, i)] = 1.0;
    }
    a
}

/// Lognormal demand model: `xi_k = exp(chi_k)` with `chi` normal. `second_moment`
/// is `E[chi chi']`, so the covariance of `chi` is `second_moment - nu nu'`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalSpec {
    pub nu: Vec<f64>,
    /// Row-major `K x K`.
    pub second_moment: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Row-major `K x K`.
    pub correlation: Vec<f64>,
}

impl LognormalSpec {
    pub fn k(&self) -> usize {
        self.nu.len()
    }

    pub fn second_moment_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(k, k, &self.second_moment)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let nu = DVector::from_column_slice(&self.nu);
        self.second_moment_matrix() - &nu * nu.transpose()
    }
}

/// `nu ~ U[0, 2]^K`, standard deviations `1/4`, random correlation `C`, and
/// second moment `diag(sigma) C diag(sigma) + nu nu'`.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, k: usize) -> LognormalSpec {
    let nu: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..2.0)).collect();
    let std_dev = vec![0.25; k];
    let c = random_correlation(rng, k);
    let mut second = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            second[(i, j)] = std_dev[i] * c[(i, j)] * std_dev[j] + nu[i] * nu[j];
        }
    }
    LognormalSpec {
        nu,
        second_moment: second.transpose().iter().copied().collect(),
        std_dev,
        correlation: c.transpose().iter().copied().collect(),
    }
}

/// Symmetric square root of a PSD matrix; eigenvalues down to `-1e-10` are clipped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().any(|e| *e < -1e-10 || !e.is_finite()) {
        return Err(Error::InvalidInput("matrix is not positive semidefinite".into()));
    }
    let d = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// `n` samples of the lognormal demand.
pub fn sample_lognormal<R: Rng + ?Sized>(spec: &LognormalSpec, n: usize, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    let k = spec.k();
    let root = psd_sqrt(&spec.covariance())?;
    let nu = DVector::from_column_slice(&spec.nu);
    Ok((0..n)
        .map(|_| {
            let z: DVector<f64> = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut *rng));
            (&nu + &root * z).map(f64::exp)
        })
        .collect())
}

/// Random sum-of-max recourse on `[0, 1]^K`: `N2 ~ U{1, ..., ceil(ln(K + 1))}`
/// unless given, `A ~ U[0, 1]`, and `b_n ~ U[0, sum_k A_nk]` so that every
/// term is active on part of the box.
pub fn random_summax<R: Rng + ?Sized>(rng: &mut R, k: usize, n2: Option<usize>) -> Result<SumMaxRecourse> {
    if k == 0 {
        return Err(Error::Precondition("K must be positive".into()));
    }
    let n2 = n2.unwrap_or_else(|| {
        let hi = ((k as f64 + 1.0).ln().ceil() as usize).max(1);
        rng.random_range(1..=hi)
    });
    let a = DMatrix::from_fn(n2, k, |_, _| rng.random_range(0.0..1.0));
    let b: Vec<f64> = (0..n2).map(|n| rng.random_range(0.0..1.0) * a.row(n).sum()).collect();
    SumMaxRecourse::unit_box(&a, &b)
}

/// `n` points uniform on `[0, 1]^K`.
pub fn uniform_samples<R: Rng + ?Sized>(rng: &mut R, k: usize, n: usize) -> Vec<DVector<f64>> {
    (0..n).map(|_| DVector::from_fn(k, |_, _| rng.random_range(0.0..1.0))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correlation_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 1..6 {
            let c = random_correlation(&mut rng, k);
            for i in 0..k {
                assert_eq!(c[(i, i)], 1.0);
            }
            let e = SymmetricEigen::new(c.clone()).eigenvalues;
            assert!(e.iter().all(|v| *v > -1e-12), "{e}");
            assert!(c.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn one_dimensional_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_instance(&mut rng, 1);
        assert_eq!(s.correlation, vec![1.0]);
        assert!((s.second_moment[0] - (0.0625 + s.nu[0] * s.nu[0])).abs() < 1e-15);
        assert!(s.nu[0] >= 0.0 && s.nu[0] <= 2.0);
    }

    #[test]
    fn degenerate_lognormal() {
        let spec = LognormalSpec {
            nu: vec![0.5, 1.0],
            second_moment: vec![0.25, 0.5, 0.5, 1.0],
            std_dev: vec![0.0, 0.0],
            correlation: vec![1.0, 0.0, 0.0, 1.0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in sample_lognormal(&spec, 5, &mut rng).unwrap() {
            assert!((s[0] - 0.5f64.exp()).abs() < 1e-9 && (s[1] - 1f64.exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn summax_term_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let r = random_summax(&mut rng, 4, None).unwrap();
            assert!((1..=2).contains(&r.n2()));
        }
        assert_eq!(random_summax(&mut rng, 2, Some(3)).unwrap().n2(), 3);
    }
}
