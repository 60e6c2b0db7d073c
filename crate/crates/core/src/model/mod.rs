//! Problem data for two-stage distributionally robust linear programs.
//!
//! The recourse problem is
//!
//! ```text
//! Z(x, xi) = min (Q xi + q)'y  s.t.  T(x) xi + h(x) <= W y
//! ```
//!
//! with uncertainty supported on `Xi = { xi >= 0 : S xi <= t }` and an
//! ambiguity set given by a Wasserstein ball around the empirical
//! distribution of the samples.

mod checks;
pub mod dense;
mod extend;
mod io;

pub use checks::{
    check_complete_recourse, check_sufficiently_expensive, validate, CompleteRecourse, ExpensiveReport, Finding,
    FindingKind, ValidationReport,
};
pub use extend::{extend, ExtendedData};
pub use io::{from_json_str, load_problem, save_problem, to_json_string};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings, SolveStatus, Var};
use crate::{Error, Result, FEAS_TOL};

/// `Xi = { xi : S xi <= t }`, intersected with the nonnegative orthant unless
/// `nonnegative` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPolytope {
    #[serde(rename = "S", with = "dense::matrix")]
    pub s: DMatrix<f64>,
    #[serde(with = "dense::vector")]
    pub t: DVector<f64>,
    #[serde(default = "default_true")]
    pub nonnegative: bool,
}

fn default_true() -> bool {
    true
}

impl SupportPolytope {
    /// Builds and checks non-emptiness with a phase-1 LP.
    pub fn new(s: DMatrix<f64>, t: DVector<f64>) -> Result<Self> {
        let sp = SupportPolytope { s, t, nonnegative: true };
        sp.check_shape()?;
        if !sp.is_nonempty()? {
            return Err(Error::InvalidInput("support polytope is empty".into()));
        }
        Ok(sp)
    }

    /// The nonnegative orthant in `R^k` (no `S xi <= t` rows).
    pub fn orthant(k: usize) -> Self {
        SupportPolytope { s: DMatrix::zeros(0, k), t: DVector::zeros(0), nonnegative: true }
    }

    /// All of `R^k`.
    pub fn whole_space(k: usize) -> Self {
        SupportPolytope { s: DMatrix::zeros(0, k), t: DVector::zeros(0), nonnegative: false }
    }

    /// The box `[l, u]` with `0 <= l <= u`. Lower-bound rows are only added
    /// where `l_k > 0`.
    pub fn boxed(l: &[f64], u: &[f64]) -> Result<Self> {
        let k = u.len();
        if l.len() != k {
            return Err(Error::Dimension("box bounds of different length".into()));
        }
        if l.iter().zip(u).any(|(a, b)| *a < 0.0 || a > b) {
            return Err(Error::InvalidInput("box bounds must satisfy 0 <= l <= u".into()));
        }
        let lows: Vec<usize> = (0..k).filter(|&i| l[i] > 0.0).collect();
        let j = k + lows.len();
        let mut s = DMatrix::zeros(j, k);
        let mut t = DVector::zeros(j);
        for i in 0..k {
            s[(i, i)] = 1.0;
            t[i] = u[i];
        }
        for (r, &i) in lows.iter().enumerate() {
            s[(k + r, i)] = -1.0;
            t[k + r] = -l[i];
        }
        Ok(SupportPolytope { s, t, nonnegative: true })
    }

    pub fn unit_box(k: usize) -> Self {
        Self::boxed(&vec![0.0; k], &vec![1.0; k]).expect("unit box is valid")
    }

    pub fn dim(&self) -> usize {
        self.s.ncols()
    }

    /// Number of `S xi <= t` rows (J).
    pub fn rows(&self) -> usize {
        self.s.nrows()
    }

    pub(crate) fn check_shape(&self) -> Result<()> {
        if self.s.nrows() != self.t.len() {
            return Err(Error::Dimension(format!("S has {} rows but t has {}", self.s.nrows(), self.t.len())));
        }
        if self.s.ncols() == 0 {
            return Err(Error::Dimension("support must have K >= 1".into()));
        }
        Ok(())
    }

    pub fn contains(&self, xi: &DVector<f64>, tol: f64) -> bool {
        if xi.len() != self.dim() {
            return false;
        }
        if self.nonnegative && xi.iter().any(|v| *v < -tol) {
            return false;
        }
        let lhs = &self.s * xi;
        lhs.iter().zip(self.t.iter()).all(|(a, b)| *a <= b + tol)
    }

    /// Adds `K` variables constrained to `Xi` to `b`.
    pub(crate) fn add_member(&self, b: &mut ProgramBuilder, name: &str) -> Vec<Var> {
        let xi = b.vars(name, self.dim());
        if self.nonnegative {
            b.add_nonneg(format!("{name}>=0"), xi.iter().map(|&v| v.into()).collect());
        }
        if self.rows() > 0 {
            let rows = (0..self.rows())
                .map(|j| {
                    let mut e = LinExpr::constant(self.t[j]);
                    for (k, &v) in xi.iter().enumerate() {
                        e.add_term(v, -self.s[(j, k)]);
                    }
                    e
                })
                .collect();
            b.add_nonneg(format!("{name}:S xi<=t"), rows);
        }
        xi
    }

    pub fn is_nonempty(&self) -> Result<bool> {
        let mut b = ProgramBuilder::new();
        self.add_member(&mut b, "xi");
        let r = solve(&b.build(), &SolveSettings::default())?;
        match r.status {
            SolveStatus::Optimal => Ok(true),
            SolveStatus::PrimalInfeasible => Ok(false),
            s => Err(Error::solver(s, r.diagnostics)),
        }
    }

    /// Coordinatewise bounds of `Xi`, or `None` when some coordinate is unbounded.
    pub fn bounding_box(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let k = self.dim();
        let mut lo = vec![0.0; k];
        let mut hi = vec![0.0; k];
        for coord in 0..k {
            for (sign, out) in [(1.0, &mut lo), (-1.0, &mut hi)] {
                let mut b = ProgramBuilder::new();
                let xi = self.add_member(&mut b, "xi");
                b.minimize(xi[coord] * sign);
                let r = solve(&b.build(), &SolveSettings::default())?;
                match r.status {
                    SolveStatus::Optimal => out[coord] = sign * r.primal_objective,
                    SolveStatus::DualInfeasible => return Ok(None),
                    SolveStatus::PrimalInfeasible => {
                        return Err(Error::InvalidInput("support polytope is empty".into()))
                    }
                    s => return Err(Error::solver(s, r.diagnostics)),
                }
            }
        }
        Ok(Some((lo, hi)))
    }

    /// If `Xi` is exactly an axis-aligned box, returns its bounds.
    pub fn as_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.nonnegative {
            return None;
        }
        let k = self.dim();
        let mut lo = vec![0.0f64; k];
        let mut hi = vec![f64::INFINITY; k];
        for j in 0..self.rows() {
            let nz: Vec<usize> = (0..k).filter(|&c| self.s[(j, c)] != 0.0).collect();
            if nz.len() != 1 {
                return None;
            }
            let c = nz[0];
            let a = self.s[(j, c)];
            if a > 0.0 {
                hi[c] = hi[c].min(self.t[j] / a);
            } else {
                lo[c] = lo[c].max(self.t[j] / a);
            }
        }
        if hi.iter().any(|v| !v.is_finite()) || lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return None;
        }
        Some((lo, hi))
    }

    /// Vertices of a box support, if the support is a box with at most `limit` vertices.
    pub fn box_vertices(&self, limit: usize) -> Option<Vec<DVector<f64>>> {
        let (lo, hi) = self.as_box()?;
        let k = lo.len();
        if k >= usize::BITS as usize || (1usize << k) > limit {
            return None;
        }
        Some(
            (0..1usize << k)
                .map(|mask| DVector::from_fn(k, |i, _| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }))
                .collect(),
        )
    }
}

/// `A(x) = base + sum_n x_n slopes[n]`. An empty `slopes` list means constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrix {
    #[serde(with = "dense::matrix")]
    pub base: DMatrix<f64>,
    #[serde(default, with = "dense::matrix_list")]
    pub slopes: Vec<DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn constant(base: DMatrix<f64>) -> Self {
        AffineMatrix { base, slopes: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.base.clone();
        for (s, &xn) in self.slopes.iter().zip(x) {
            if xn != 0.0 {
                m += s * xn;
            }
        }
        m
    }

    /// Entry (r, c) as an affine expression in the first-stage variables.
    pub fn entry_expr(&self, r: usize, c: usize, x: &[LinExpr]) -> LinExpr {
        let mut e = LinExpr::constant(self.base[(r, c)]);
        for (s, xn) in self.slopes.iter().zip(x) {
            e.add_scaled(xn, s[(r, c)]);
        }
        e
    }

    pub fn is_constant(&self) -> bool {
        self.slopes.iter().all(|s| s.iter().all(|v| *v == 0.0))
    }
}

/// `v(x) = base + slope x`, with `slope` of size `len x N1` (may have zero columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineVector {
    #[serde(with = "dense::vector")]
    pub base: DVector<f64>,
    #[serde(with = "dense::matrix")]
    pub slope: DMatrix<f64>,
}

impl AffineVector {
    pub fn constant(base: DVector<f64>) -> Self {
        let n = base.len();
        AffineVector { base, slope: DMatrix::zeros(n, 0) }
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut v = self.base.clone();
        for (n, &xn) in x.iter().enumerate().take(self.slope.ncols()) {
            if xn != 0.0 {
                v.axpy(xn, &self.slope.column(n), 1.0);
            }
        }
        v
    }

    pub fn entry_expr(&self, r: usize, x: &[LinExpr]) -> LinExpr {
        let mut e = LinExpr::constant(self.base[r]);
        for (n, xn) in x.iter().enumerate().take(self.slope.ncols()) {
            e.add_scaled(xn, self.slope[(r, n)]);
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseData {
    /// `N2 x K`.
    #[serde(rename = "Q", with = "dense::matrix")]
    pub q_mat: DMatrix<f64>,
    #[serde(with = "dense::vector")]
    pub q: DVector<f64>,
    /// `M x N2`.
    #[serde(rename = "W", with = "dense::matrix")]
    pub w: DMatrix<f64>,
    /// `M x K`, affine in x.
    #[serde(rename = "T")]
    pub t: AffineMatrix,
    /// length `M`, affine in x.
    pub h: AffineVector,
}

impl RecourseData {
    pub fn n2(&self) -> usize {
        self.w.ncols()
    }

    pub fn m(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.t.base.ncols()
    }

    pub fn q_is_zero(&self) -> bool {
        self.q_mat.iter().all(|v| *v == 0.0)
    }

    /// Cost vector `Q xi + q`.
    pub fn cost(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.q_mat * xi + &self.q
    }

    /// Right-hand side `T(x) xi + h(x)`.
    pub fn rhs(&self, x: &[f64], xi: &DVector<f64>) -> DVector<f64> {
        self.t.eval(x) * xi + self.h.eval(x)
    }
}

/// `{ x : A x <= b, lower <= x <= upper }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSet {
    #[serde(rename = "A", with = "dense::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "dense::vector")]
    pub b: DVector<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "dense::vector_opt")]
    pub lower: Option<DVector<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "dense::vector_opt")]
    pub upper: Option<DVector<f64>>,
}

impl FirstStageSet {
    /// `R^n` with no constraints.
    pub fn free(n: usize) -> Self {
        FirstStageSet { a: DMatrix::zeros(0, n), b: DVector::zeros(0), lower: None, upper: None }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Adds the constraints of the set on the variables `x`.
    pub(crate) fn constrain(&self, b: &mut ProgramBuilder, x: &[Var]) {
        if self.a.nrows() > 0 {
            let rows = (0..self.a.nrows())
                .map(|r| {
                    let mut e = LinExpr::constant(self.b[r]);
                    for (n, &v) in x.iter().enumerate() {
                        e.add_term(v, -self.a[(r, n)]);
                    }
                    e
                })
                .collect();
            b.add_nonneg("X:Ax<=b", rows);
        }
        if let Some(l) = &self.lower {
            let rows: Vec<LinExpr> =
                x.iter().zip(l.iter()).filter(|(_, l)| l.is_finite()).map(|(&v, &l)| LinExpr::from(v) - l).collect();
            if !rows.is_empty() {
                b.add_nonneg("X:x>=lower", rows);
            }
        }
        if let Some(u) = &self.upper {
            let rows: Vec<LinExpr> = x
                .iter()
                .zip(u.iter())
                .filter(|(_, u)| u.is_finite())
                .map(|(&v, &u)| LinExpr::constant(u) - v)
                .collect();
            if !rows.is_empty() {
                b.add_nonneg("X:x<=upper", rows);
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let xv = DVector::from_column_slice(x);
        let ax = &self.a * &xv;
        if ax.iter().zip(self.b.iter()).any(|(a, b)| *a > b + tol) {
            return false;
        }
        if let Some(l) = &self.lower {
            if x.iter().zip(l.iter()).any(|(x, l)| *x < l - tol) {
                return false;
            }
        }
        if let Some(u) = &self.upper {
            if x.iter().zip(u.iter()).any(|(x, u)| *x > u + tol) {
                return false;
            }
        }
        true
    }
}

/// Ground metric on the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundNorm {
    Euclidean,
    /// `d(a, b) = max_k max{ (a_k - b_k) / w_plus, (b_k - a_k) / w_minus }`.
    WeightedMax {
        w_plus: f64,
        w_minus: f64,
    },
    /// General p-norm; representable but rejected by the exact LP builder.
    PNorm {
        p: f64,
    },
}

impl GroundNorm {
    /// `d(a, b)`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            GroundNorm::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            GroundNorm::WeightedMax { w_plus, w_minus } => {
                a.iter().zip(b).map(|(x, y)| ((x - y) / w_plus).max((y - x) / w_minus)).fold(0.0, f64::max)
            }
            GroundNorm::PNorm { p } => a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Wasserstein order r (1 or 2).
    pub order: u8,
    pub norm: GroundNorm,
    /// Ball radius.
    pub epsilon: f64,
}

impl MetricConfig {
    pub fn type2(epsilon: f64) -> Self {
        MetricConfig { order: 2, norm: GroundNorm::Euclidean, epsilon }
    }

    pub fn type1(epsilon: f64, w_plus: f64, w_minus: f64) -> Self {
        MetricConfig { order: 1, norm: GroundNorm::WeightedMax { w_plus, w_minus }, epsilon }
    }

    /// Returns a description of the first violated invariant, if any.
    pub fn problem(&self) -> Option<String> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Some(format!("radius {} must be finite and nonnegative", self.epsilon));
        }
        match (self.order, self.norm) {
            (2, GroundNorm::Euclidean) => None,
            (1, GroundNorm::WeightedMax { w_plus, w_minus }) => {
                if w_plus > 0.0 && w_minus > 0.0 && w_plus.is_finite() && w_minus.is_finite() {
                    None
                } else {
                    Some("weighted-max scaling parameters must be positive".into())
                }
            }
            (r, n) => Some(format!("order {r} is not paired with a supported norm ({n:?})")),
        }
    }
}

/// A complete instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageProblem {
    #[serde(with = "dense::vector")]
    pub c: DVector<f64>,
    #[serde(rename = "X")]
    pub first_stage: FirstStageSet,
    pub recourse: RecourseData,
    pub support: SupportPolytope,
    #[serde(with = "dense::vector_list")]
    pub samples: Vec<DVector<f64>>,
    pub metric: MetricConfig,
}

impl TwoStageProblem {
    pub fn n1(&self) -> usize {
        self.c.len()
    }

    pub fn k(&self) -> usize {
        self.support.dim()
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.metric.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        let mut p = self.clone();
        p.metric.epsilon = epsilon;
        p
    }

    /// Lists dimension inconsistencies; empty when all shapes agree.
    pub fn dimension_problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (n1, k) = (self.n1(), self.k());
        let r = &self.recourse;
        let (m, n2) = (r.m(), r.n2());
        let mut need = |ok: bool, msg: String| {
            if !ok {
                out.push(msg)
            }
        };
        need(k >= 1, "support dimension K must be at least 1".into());
        need(self.support.s.nrows() == self.support.t.len(), "S and t row counts differ".into());
        need(self.first_stage.dim() == n1, format!("X has {} columns, c has {n1}", self.first_stage.dim()));
        need(self.first_stage.a.nrows() == self.first_stage.b.len(), "X: A and b row counts differ".into());
        if let Some(l) = &self.first_stage.lower {
            need(l.len() == n1, "X: lower bound length".into());
        }
        if let Some(u) = &self.first_stage.upper {
            need(u.len() == n1, "X: upper bound length".into());
        }
        need(r.q_mat.shape() == (n2, k), format!("Q is {:?}, expected ({n2}, {k})", r.q_mat.shape()));
        need(r.q.len() == n2, format!("q has length {}, expected {n2}", r.q.len()));
        need(r.t.base.shape() == (m, k), format!("T base is {:?}, expected ({m}, {k})", r.t.base.shape()));
        need(
            r.t.slopes.is_empty() || r.t.slopes.len() == n1,
            format!("T has {} slopes, expected 0 or {n1}", r.t.slopes.len()),
        );
        for (n, s) in r.t.slopes.iter().enumerate() {
            need(s.shape() == (m, k), format!("T slope {n} is {:?}, expected ({m}, {k})", s.shape()));
        }
        need(r.h.base.len() == m, format!("h base has length {}, expected {m}", r.h.base.len()));
        need(
            r.h.slope.nrows() == m && (r.h.slope.ncols() == 0 || r.h.slope.ncols() == n1),
            format!("h slope is {:?}, expected ({m}, 0 or {n1})", r.h.slope.shape()),
        );
        for (i, s) in self.samples.iter().enumerate() {
            need(s.len() == k, format!("sample {i} has length {}, expected {k}", s.len()));
        }
        out
    }

    pub fn check_dimensions(&self) -> Result<()> {
        match self.dimension_problems().into_iter().next() {
            Some(msg) => Err(Error::Dimension(msg)),
            None => Ok(()),
        }
    }

    pub fn samples_in_support(&self) -> bool {
        self.samples.iter().all(|s| self.support.contains(s, FEAS_TOL))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_support_shape() {
        let b = SupportPolytope::boxed(&[0.0, 0.5], &[1.0, 2.0]).unwrap();
        assert_eq!(b.rows(), 3);
        assert!(b.contains(&DVector::from_vec(vec![0.0, 0.5]), 1e-12));
        assert!(!b.contains(&DVector::from_vec(vec![0.0, 0.4]), 1e-12));
        assert_eq!(b.as_box().unwrap(), (vec![0.0, 0.5], vec![1.0, 2.0]));
        assert_eq!(b.box_vertices(16).unwrap().len(), 4);
    }

    #[test]
    fn bounding_box_of_simplex() {
        let s = SupportPolytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![2.0])).unwrap();
        let (lo, hi) = s.bounding_box().unwrap().unwrap();
        for v in lo {
            assert!(v.abs() < 1e-7);
        }
        for v in hi {
            assert!((v - 2.0).abs() < 1e-7);
        }
        assert!(SupportPolytope::orthant(2).bounding_box().unwrap().is_none());
    }

    #[test]
    fn empty_support_rejected() {
        let r = SupportPolytope::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, -1.0));
        assert!(r.is_err());
    }

    #[test]
    fn affine_eval() {
        let t = AffineMatrix {
            base: DMatrix::from_element(1, 1, 1.0),
            slopes: vec![DMatrix::from_element(1, 1, 2.0), DMatrix::from_element(1, 1, -1.0)],
        };
        assert_eq!(t.eval(&[1.0, 3.0])[(0, 0)], 0.0);
        let h = AffineVector { base: DVector::from_vec(vec![1.0]), slope: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]) };
        assert_eq!(h.eval(&[2.0, 3.0])[0], 6.0);
    }

    #[test]
    fn weighted_max_distance() {
        let d = GroundNorm::WeightedMax { w_plus: 2.0, w_minus: 1.0 };
        assert_eq!(d.distance(&[3.0, 0.0], &[0.0, 4.0]), 4.0);
        assert_eq!(d.distance(&[3.0], &[0.0]), 1.5);
    }

    #[test]
    fn metric_pairing() {
        assert!(MetricConfig::type2(1.0).problem().is_none());
        assert!(MetricConfig::type1(1.0, 1.0, 1.0).problem().is_none());
        assert!(MetricConfig { order: 2, norm: GroundNorm::PNorm { p: 3.0 }, epsilon: 1.0 }.problem().is_some());
        assert!(MetricConfig::type2(-1.0).problem().is_some());
    }
}
