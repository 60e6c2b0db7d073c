use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings};
use crate::model::{
    AffineMatrix, AffineVector, FirstStageSet, MetricConfig, RecourseData, SupportPolytope, TwoStageProblem,
};
use crate::{Error, Result, FEAS_TOL};

/// Largest number of piece combinations the exact program will enumerate.
pub const MAX_COMBINATIONS: usize = 16384;

/// Affine piece `a'xi - beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub a: Vec<f64>,
    pub beta: f64,
}

/// `Z(xi) = sum_n max_l (a_nl' xi - beta_nl)` on the box `[lower, upper]`.
///
/// The plain form `sum_n max{A_n xi - b_n, 0}` has two pieces per term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumMaxRecourse {
    pub terms: Vec<Vec<Piece>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SumMaxRecourse {
    /// `sum_n max{A_n xi - b_n, 0}` on `[lower, upper]`.
    pub fn new(a: &DMatrix<f64>, b: &[f64], lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension("A and b row counts differ".into()));
        }
        let k = a.ncols();
        let terms = (0..a.nrows())
            .map(|n| {
                vec![Piece { a: a.row(n).iter().copied().collect(), beta: b[n] }, Piece { a: vec![0.0; k], beta: 0.0 }]
            })
            .collect();
        Self::with_pieces(terms, lower, upper)
    }

    pub fn unit_box(a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        let k = a.ncols();
        Self::new(a, b, vec![0.0; k], vec![1.0; k])
    }

    pub fn with_pieces(terms: Vec<Vec<Piece>>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let k = upper.len();
        if lower.len() != k || k == 0 {
            return Err(Error::Dimension("box bounds must be nonempty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| *l < 0.0 || l > u || !u.is_finite()) {
            return Err(Error::InvalidInput("box must satisfy 0 <= lower <= upper < inf".into()));
        }
        if terms.is_empty() || terms.iter().any(|t| t.is_empty()) {
            return Err(Error::InvalidInput("every term needs at least one piece".into()));
        }
        if terms.iter().flatten().any(|p| p.a.len() != k || !p.beta.is_finite()) {
            return Err(Error::Dimension("piece slope length differs from the box dimension".into()));
        }
        Ok(SumMaxRecourse { terms, lower, upper })
    }

    pub fn k(&self) -> usize {
        self.upper.len()
    }

    pub fn n2(&self) -> usize {
        self.terms.len()
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.iter()
                    .map(|p| p.a.iter().zip(xi).map(|(a, x)| a * x).sum::<f64>() - p.beta)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum()
    }

    /// Number of piece combinations, or `None` on overflow.
    pub fn combinations(&self) -> Option<usize> {
        self.terms.iter().try_fold(1usize, |acc, t| acc.checked_mul(t.len()))
    }

    pub fn support(&self) -> SupportPolytope {
        SupportPolytope::boxed(&self.lower, &self.upper).expect("bounds validated at construction")
    }

    /// The same recourse as a two-stage instance with no first stage:
    /// `min e'y s.t. y_n >= a_nl' xi - beta_nl` for every piece.
    pub fn to_problem(&self, samples: &[DVector<f64>], epsilon: f64) -> TwoStageProblem {
        let k = self.k();
        let n2 = self.n2();
        let m: usize = self.terms.iter().map(Vec::len).sum();
        let mut w = DMatrix::zeros(m, n2);
        let mut t = DMatrix::zeros(m, k);
        let mut h = DVector::zeros(m);
        let mut row = 0;
        for (n, term) in self.terms.iter().enumerate() {
            for p in term {
                w[(row, n)] = 1.0;
                for (c, &a) in p.a.iter().enumerate() {
                    t[(row, c)] = a;
                }
                h[row] = -p.beta;
                row += 1;
            }
        }
        TwoStageProblem {
            c: DVector::zeros(0),
            first_stage: FirstStageSet::free(0),
            recourse: RecourseData {
                q_mat: DMatrix::zeros(n2, k),
                q: DVector::from_element(n2, 1.0),
                w,
                t: AffineMatrix::constant(t),
                h: AffineVector::constant(h),
            },
            support: self.support(),
            samples: samples.to_vec(),
            metric: MetricConfig::type2(epsilon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocpRecord {
    pub sample: usize,
    /// Selected piece per term.
    pub combination: Vec<usize>,
    /// Multipliers of `xi >= lower`.
    pub theta: Vec<f64>,
    /// Multipliers of `xi <= upper`.
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocpSolution {
    pub value: f64,
    pub lambda: f64,
    pub s: Vec<f64>,
    pub records: Vec<SocpRecord>,
    pub solve_time: f64,
    pub provenance: Provenance,
}

fn combination(mut idx: usize, sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .map(|&s| {
            let c = idx % s;
            idx /= s;
            c
        })
        .collect()
}

/// Exact worst-case expectation of a sum-of-max recourse over the type-2
/// Wasserstein ball of radius `epsilon` on the box.
///
/// For every sample `i` and piece combination with combined affine function
/// `g' xi - beta`, the inner supremum over the box is dualized with
/// multipliers `theta` (lower bounds) and `eta` (upper bounds), giving
///
/// ```text
/// R = s_i + beta + lambda |xi_i|^2 + l'theta - u'eta >= 0
/// || [g + 2 lambda xi_i + theta - eta ; R - lambda] || <= R + lambda
/// ```
pub fn exact_wce_summax(r: &SumMaxRecourse, samples: &[DVector<f64>], epsilon: f64) -> Result<SocpSolution> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Precondition("radius must be positive and finite".into()));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let k = r.k();
    let support = r.support();
    for (i, s) in samples.iter().enumerate() {
        if !support.contains(s, FEAS_TOL) {
            return Err(Error::Precondition(format!("sample {i} lies outside the box")));
        }
    }
    let total = match r.combinations() {
        Some(c) if c <= MAX_COMBINATIONS => c,
        _ => {
            return Err(Error::EnumerationGuard(format!(
                "{} terms exceed the limit of {MAX_COMBINATIONS} piece combinations",
                r.n2()
            )))
        }
    };
    let sizes: Vec<usize> = r.terms.iter().map(Vec::len).collect();
    let combos: Vec<(Vec<usize>, Vec<f64>, f64)> = (0..total)
        .map(|idx| {
            let sel = combination(idx, &sizes);
            let mut g = vec![0.0; k];
            let mut beta = 0.0;
            for (n, &l) in sel.iter().enumerate() {
                let p = &r.terms[n][l];
                for (gc, a) in g.iter_mut().zip(&p.a) {
                    *gc += a;
                }
                beta += p.beta;
            }
            (sel, g, beta)
        })
        .collect();

    let n_samples = samples.len();
    let mut b = ProgramBuilder::new();
    let lambda = b.nonneg_var("lambda");
    let s = b.vars("s", n_samples);
    let mut handles = Vec::with_capacity(n_samples * total);
    for (i, xi) in samples.iter().enumerate() {
        let sq = xi.norm_squared();
        for (sel, g, beta) in &combos {
            let theta = b.vars(&format!("theta[{i},{sel:?}]"), k);
            let eta = b.vars(&format!("eta[{i},{sel:?}]"), k);
            let mut nonneg: Vec<LinExpr> = theta.iter().map(|&v| v.into()).collect();
            nonneg.extend(eta.iter().map(|&v| LinExpr::from(v)));
            b.add_nonneg(format!("multipliers[i={i},l={sel:?}]"), nonneg);

            let mut rr = LinExpr::term(s[i], 1.0);
            rr.add_const(*beta).add_term(lambda, sq);
            for c in 0..k {
                rr.add_term(theta[c], r.lower[c]).add_term(eta[c], -r.upper[c]);
            }
            b.add_nonneg(format!("R>=0[i={i},l={sel:?}]"), vec![rr.clone()]);

            let mut cone = Vec::with_capacity(k + 2);
            cone.push(rr.clone() + lambda);
            for c in 0..k {
                let mut e = LinExpr::constant(g[c]);
                e.add_term(lambda, 2.0 * xi[c]).add_term(theta[c], 1.0).add_term(eta[c], -1.0);
                cone.push(e);
            }
            cone.push(rr - lambda);
            b.add_soc(format!("hyperbolic[i={i},l={sel:?}]"), cone);
            handles.push((i, sel.clone(), theta, eta));
        }
    }
    let mut obj = LinExpr::term(lambda, epsilon * epsilon);
    for &v in &s {
        obj.add_term(v, 1.0 / n_samples as f64);
    }
    b.minimize(obj);
    // Stalls a hair short of 1e-8 are accepted up to 1e-7.
    let settings = SolveSettings { reduced_tol: Some(1e-7), ..Default::default() };
    let res = solve(&b.build(), &settings)?;
    let value = res.value()?;
    let x = &res.x;
    Ok(SocpSolution {
        value,
        lambda: x[lambda.0],
        s: s.iter().map(|v| x[v.0]).collect(),
        records: handles
            .into_iter()
            .map(|(i, sel, th, et)| SocpRecord {
                sample: i,
                combination: sel,
                theta: th.iter().map(|v| x[v.0]).collect(),
                eta: et.iter().map(|v| x[v.0]).collect(),
            })
            .collect(),
        solve_time: res.solve_time,
        provenance: Provenance {
            method: format!("exact SOCP over {total} piece combinations"),
            grid_per_dim: None,
            tolerance: settings.feas_tol,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64) -> SumMaxRecourse {
        SumMaxRecourse::unit_box(&DMatrix::from_element(1, 1, a), &[b]).unwrap()
    }

    #[test]
    fn identically_zero_on_box() {
        let r = scalar(1.0, 2.0);
        let v = exact_wce_summax(&r, &[DVector::from_element(1, 0.3)], 1.0).unwrap();
        assert!(v.value.abs() < 1e-6, "{}", v.value);
    }

    #[test]
    fn analytic_unit_radius() {
        // min_l l + sup_{xi in [0,1]} (xi - l xi^2) = 1 at l = 0.
        let r = scalar(1.0, 0.0);
        let v = exact_wce_summax(&r, &[DVector::from_element(1, 0.0)], 1.0).unwrap();
        assert!((v.value - 1.0).abs() < 1e-6, "{}", v.value);
    }

    #[test]
    fn small_radius_approaches_sample_value() {
        let r = scalar(1.0, 0.0);
        let v = exact_wce_summax(&r, &[DVector::from_element(1, 1.0)], 1e-3).unwrap();
        assert!((v.value - 1.0).abs() < 1e-2);
    }

    #[test]
    fn guard_refuses_large_enumeration() {
        let a = DMatrix::from_element(15, 1, 1.0);
        let r = SumMaxRecourse::unit_box(&a, &[0.0; 15]).unwrap();
        let e = exact_wce_summax(&r, &[DVector::from_element(1, 0.0)], 1.0).unwrap_err();
        assert!(matches!(e, Error::EnumerationGuard(_)));
    }

    #[test]
    fn combination_enumeration() {
        assert_eq!(combination(5, &[2, 3]), vec![1, 2]);
        assert_eq!(combination(0, &[2, 3]), vec![0, 0]);
    }
}
