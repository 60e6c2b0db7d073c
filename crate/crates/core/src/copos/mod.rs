//! Copositive programs for worst-case expectations over 2-Wasserstein balls.
//!
//! Every copositive constraint is replaced by the inner approximation
//! `M = P + N` with `P` positive semidefinite and `N` entrywise nonnegative.
//! Minimization values over this restriction can only increase, so a `delta = 0`
//! value is an upper bound on the worst-case expectation, while `delta > 0`
//! values are reported as heuristic lower estimates.

mod refine;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, ConicProgram, ExprMatrix, LinExpr, ProgramBuilder, SolveSettings, SolveStatus, Var};
use crate::model::{extend, ExtendedData, TwoStageProblem};
use crate::{Error, Result};

pub use refine::{default_schedule, delta_refinement, robust_mode, Refinement, RefinementStep};

/// Inner approximation of a copositive constraint on the symmetric part of `m`.
/// Returns the nonnegative part `N` in `svec` order.
pub fn build_c0_block(b: &mut ProgramBuilder, label: impl Into<String>, m: &ExprMatrix) -> Result<Vec<Var>> {
    if m.side() == 0 {
        return Err(Error::Precondition("copositive block must have side at least 1".into()));
    }
    Ok(b.add_c0(label, m))
}

/// Piecewise affine disutility `U(y) = max_t (alpha_t y + beta_t)` with
/// `alpha >= 0`, `alpha != 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisutilitySpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl DisutilitySpec {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let u = DisutilitySpec { alpha, beta };
        u.check()?;
        Ok(u)
    }

    /// `U(y) = y`, which recovers the worst-case expectation.
    pub fn identity() -> Self {
        DisutilitySpec { alpha: vec![1.0], beta: vec![0.0] }
    }

    /// `U(y) = max{0, y / rho}`, whose certainty equivalent is CVaR at level `rho`.
    pub fn cvar(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Precondition(format!("CVaR level must lie in (0, 1], got {rho}")));
        }
        Ok(DisutilitySpec { alpha: vec![0.0, 1.0 / rho], beta: vec![0.0, 0.0] })
    }

    pub fn pieces(&self) -> usize {
        self.alpha.len()
    }

    /// Adds `beta0` to every intercept.
    pub fn shifted(&self, beta0: f64) -> Self {
        DisutilitySpec { alpha: self.alpha.clone(), beta: self.beta.iter().map(|b| b + beta0).collect() }
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a * y + b).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        if self.alpha.is_empty() {
            return Err(Error::Precondition("disutility needs at least one piece".into()));
        }
        if self.alpha.len() != self.beta.len() {
            return Err(Error::Dimension(format!(
                "disutility has {} slopes and {} intercepts",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        if self.alpha.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("disutility coefficients must be finite".into()));
        }
        if self.alpha.iter().any(|a| *a < 0.0) {
            return Err(Error::Precondition("disutility slopes must be nonnegative".into()));
        }
        if self.alpha.iter().all(|a| *a == 0.0) {
            return Err(Error::Precondition("disutility slopes must not all vanish".into()));
        }
        Ok(())
    }
}

/// Semantics of a copositive value under the inner approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    UpperBound,
    HeuristicLowerEstimate,
}

impl BoundKind {
    pub fn for_delta(delta: f64) -> Self {
        if delta == 0.0 {
            BoundKind::UpperBound
        } else {
            BoundKind::HeuristicLowerEstimate
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            BoundKind::UpperBound => "upper bound",
            BoundKind::HeuristicLowerEstimate => "heuristic lower estimate",
        }
    }
}

/// Multipliers of one copositive block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub sample: usize,
    /// Disutility piece, 0 in the risk-neutral programs.
    pub piece: usize,
    pub s: f64,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// Linkage variable of the risk-averse program.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopositiveSolution {
    pub status: SolveStatus,
    pub delta: f64,
    pub bound: BoundKind,
    /// Program value including `c'x`; `+inf` when the program is infeasible.
    pub objective: f64,
    /// `objective - c'x`, the worst-case (risk-adjusted) recourse part.
    pub recourse_value: f64,
    pub x: Vec<f64>,
    pub lambda: f64,
    pub theta: Option<f64>,
    pub records: Vec<BlockRecord>,
    pub solve_time: f64,
}

impl CopositiveSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone)]
struct BlockVars {
    sample: usize,
    piece: usize,
    psi: Vec<Var>,
    phi: Vec<Var>,
    kappa: Option<Var>,
}

/// Variable handles of an assembled program.
#[derive(Debug, Clone)]
struct Layout {
    x: Vec<LinExpr>,
    lambda: Var,
    theta: Option<Var>,
    s: Vec<Var>,
    blocks: Vec<BlockVars>,
}

/// A copositive program together with the handles needed to read back a solution.
#[derive(Debug, Clone)]
pub struct CopositiveProgram {
    pub program: ConicProgram,
    pub delta: f64,
    c: Vec<f64>,
    layout: Layout,
}

impl CopositiveProgram {
    pub fn bound(&self) -> BoundKind {
        BoundKind::for_delta(self.delta)
    }

    pub fn solve(&self, settings: &SolveSettings) -> Result<CopositiveSolution> {
        let res = solve(&self.program, settings)?;
        let l = &self.layout;
        let mut sol = CopositiveSolution {
            status: res.status,
            delta: self.delta,
            bound: self.bound(),
            objective: f64::NAN,
            recourse_value: f64::NAN,
            x: Vec::new(),
            lambda: f64::NAN,
            theta: None,
            records: Vec::new(),
            solve_time: res.solve_time,
        };
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::PrimalInfeasible => {
                sol.objective = f64::INFINITY;
                sol.recourse_value = f64::INFINITY;
                return Ok(sol);
            }
            SolveStatus::DualInfeasible => {
                sol.objective = f64::NEG_INFINITY;
                sol.recourse_value = f64::NEG_INFINITY;
                return Ok(sol);
            }
            s => return Err(Error::solver(s, res.diagnostics)),
        }
        let z = &res.x;
        let get = |v: &Var| z[v.0];
        sol.x = l.x.iter().map(|e| e.eval(z)).collect();
        let cx: f64 = self.c.iter().zip(&sol.x).map(|(c, x)| c * x).sum();
        sol.objective = res.primal_objective;
        sol.recourse_value = res.primal_objective - cx;
        sol.lambda = get(&l.lambda);
        sol.theta = l.theta.as_ref().map(get);
        sol.records = l
            .blocks
            .iter()
            .map(|bv| BlockRecord {
                sample: bv.sample,
                piece: bv.piece,
                s: get(&l.s[bv.sample]),
                psi: bv.psi.iter().map(get).collect(),
                phi: bv.phi.iter().map(get).collect(),
                kappa: bv.kappa.as_ref().map(get),
            })
            .collect();
        Ok(sol)
    }
}

fn check_inputs(p: &TwoStageProblem, delta: f64) -> Result<ExtendedData> {
    if !(p.metric.epsilon > 0.0) {
        return Err(Error::Precondition(
            "radius must be positive: strong duality of the worst-case expectation needs epsilon > 0".into(),
        ));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Precondition(format!("delta must be finite and nonnegative, got {delta}")));
    }
    if p.samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    extend(p)
}

/// Adds one copositive block. `alpha` scales `T~(x)` and `h~(x)`; `corner` is
/// the bottom-right entry.
#[allow(clippy::too_many_arguments)]
fn add_block(
    b: &mut ProgramBuilder,
    label: String,
    ext: &ExtendedData,
    x: &[LinExpr],
    xi_hat: &DVector<f64>,
    lambda: Var,
    psi: &[Var],
    phi: &[Var],
    alpha: f64,
    delta: f64,
    corner: &LinExpr,
) {
    let k = xi_hat.len();
    let rows = ext.rows();
    let n = ext.n();
    let last = k + rows;
    let qm = &ext.q_mat;
    let w = &ext.w;
    let mut m = ExprMatrix::new(last + 1);
    let lam = LinExpr::from(lambda);

    // Top-left: lambda I + Q~' diag(phi) Q~.
    for a in 0..k {
        m.add_sym(a, a, &lam, 1.0);
        for c in a..k {
            let mut e = LinExpr::zero();
            for j in 0..n {
                let coef = qm[(j, a)] * qm[(j, c)];
                if coef != 0.0 {
                    e.add_term(phi[j], coef);
                }
            }
            m.add_sym(a, c, &e, 1.0);
        }
    }
    // Top-middle: -alpha/2 T~(x)' - Q~' diag(phi) W~'.
    for a in 0..k {
        for r in 0..rows {
            let mut e = ext.t.entry_expr(r, a, x).scaled(-0.5 * alpha);
            for j in 0..n {
                let coef = qm[(j, a)] * w[(r, j)];
                if coef != 0.0 {
                    e.add_term(phi[j], -coef);
                }
            }
            m.add_sym(a, k + r, &e, 1.0);
        }
    }
    // Top-right: -lambda xi_hat - Q~' psi / 2.
    for a in 0..k {
        let mut e = LinExpr::term(lambda, -xi_hat[a]);
        for j in 0..n {
            if qm[(j, a)] != 0.0 {
                e.add_term(psi[j], -0.5 * qm[(j, a)]);
            }
        }
        m.add_sym(a, last, &e, 1.0);
    }
    // Middle: W~ diag(phi) W~' + delta I.
    for r in 0..rows {
        for r2 in r..rows {
            let mut e = LinExpr::zero();
            for j in 0..n {
                let coef = w[(r, j)] * w[(r2, j)];
                if coef != 0.0 {
                    e.add_term(phi[j], coef);
                }
            }
            if r == r2 {
                e.add_const(delta);
            }
            m.add_sym(k + r, k + r2, &e, 1.0);
        }
    }
    // Middle-right: (W~ psi - alpha h~(x)) / 2.
    for r in 0..rows {
        let mut e = ext.h.entry_expr(r, x).scaled(-0.5 * alpha);
        for j in 0..n {
            if w[(r, j)] != 0.0 {
                e.add_term(psi[j], 0.5 * w[(r, j)]);
            }
        }
        m.add_sym(k + r, last, &e, 1.0);
    }
    m.add_sym(last, last, corner, 1.0);
    b.add_c0(label, &m);
}

/// `q~'psi - lambda ||xi_hat||^2 + sum_j phi_j q~_j^2`.
fn sample_terms(ext: &ExtendedData, xi_hat: &DVector<f64>, lambda: Var, psi: &[Var], phi: &[Var]) -> LinExpr {
    let mut e = LinExpr::term(lambda, -xi_hat.norm_squared());
    for j in 0..ext.n() {
        let qj = ext.q[j];
        if qj != 0.0 {
            e.add_term(psi[j], qj);
            e.add_term(phi[j], qj * qj);
        }
    }
    e
}

fn first_stage(b: &mut ProgramBuilder, p: &TwoStageProblem, x: Option<&[f64]>) -> Result<Vec<LinExpr>> {
    match x {
        Some(x) => {
            if x.len() != p.n1() {
                return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.n1())));
            }
            Ok(x.iter().map(|&v| LinExpr::constant(v)).collect())
        }
        None => {
            let xv = b.vars("x", p.n1());
            p.first_stage.constrain(b, &xv);
            Ok(xv.into_iter().map(LinExpr::from).collect())
        }
    }
}

fn assemble(
    p: &TwoStageProblem,
    x: Option<&[f64]>,
    delta: f64,
    u: Option<&DisutilitySpec>,
) -> Result<CopositiveProgram> {
    let ext = check_inputs(p, delta)?;
    if let Some(u) = u {
        u.check()?;
    }
    let mut b = ProgramBuilder::new();
    let xe = first_stage(&mut b, p, x)?;
    let lambda = b.nonneg_var("lambda");
    let theta = u.map(|_| b.var("theta"));
    let eps = p.metric.epsilon;
    let inv_i = 1.0 / p.samples.len() as f64;
    let n = ext.n();

    let mut obj = LinExpr::term(lambda, eps * eps);
    for (c, e) in p.c.iter().zip(&xe) {
        obj.add_scaled(e, *c);
    }
    if let Some(t) = theta {
        obj.add_term(t, 1.0);
    }

    let s = b.vars("s", p.samples.len());
    let mut blocks = Vec::new();
    for (i, xi_hat) in p.samples.iter().enumerate() {
        obj.add_term(s[i], inv_i);
        match u {
            None => {
                let psi = b.vars(&format!("psi[{i}]"), n);
                let phi = b.vars(&format!("phi[{i}]"), n);
                obj.add_scaled(&sample_terms(&ext, xi_hat, lambda, &psi, &phi), inv_i);
                let corner = LinExpr::from(s[i]);
                add_block(
                    &mut b,
                    format!("copositive[i={i}]"),
                    &ext,
                    &xe,
                    xi_hat,
                    lambda,
                    &psi,
                    &phi,
                    1.0,
                    delta,
                    &corner,
                );
                blocks.push(BlockVars { sample: i, piece: 0, psi, phi, kappa: None });
            }
            Some(u) => {
                for t in 0..u.pieces() {
                    let psi = b.vars(&format!("psi[{i},{t}]"), n);
                    let phi = b.vars(&format!("phi[{i},{t}]"), n);
                    let kappa = b.var(format!("kappa[{i},{t}]"));
                    // kappa = alpha_t theta - beta_t - q~'psi + lambda ||xi_hat||^2 - sum phi q~^2
                    let mut link = LinExpr::from(kappa);
                    link.add_term(theta.unwrap(), -u.alpha[t]);
                    link.add_const(u.beta[t]);
                    link.add_scaled(&sample_terms(&ext, xi_hat, lambda, &psi, &phi), 1.0);
                    b.add_zero(format!("kappa-link[i={i},t={t}]"), vec![link]);
                    let corner = LinExpr::from(s[i]) + kappa;
                    add_block(
                        &mut b,
                        format!("copositive[i={i},t={t}]"),
                        &ext,
                        &xe,
                        xi_hat,
                        lambda,
                        &psi,
                        &phi,
                        u.alpha[t],
                        delta,
                        &corner,
                    );
                    blocks.push(BlockVars { sample: i, piece: t, psi, phi, kappa: Some(kappa) });
                }
            }
        }
    }
    b.minimize(obj);
    Ok(CopositiveProgram {
        program: b.build(),
        delta,
        c: p.c.iter().copied().collect(),
        layout: Layout { x: xe, lambda, theta, s, blocks },
    })
}

/// Copositive program bounding the worst-case expected recourse cost at a
/// fixed first-stage decision. The objective includes the constant `c'x`.
pub fn build_wce_upper(p: &TwoStageProblem, x: &[f64], delta: f64) -> Result<CopositiveProgram> {
    assemble(p, Some(x), delta, None)
}

/// Copositive program for the whole two-stage problem, optimizing `x` over
/// the first-stage set.
pub fn build_full_problem(p: &TwoStageProblem, delta: f64) -> Result<CopositiveProgram> {
    assemble(p, None, delta, None)
}

/// Copositive program for the worst-case optimized certainty equivalent of
/// the recourse cost under disutility `u`. With `x = None` the first stage is
/// optimized jointly.
pub fn build_risk_averse(
    p: &TwoStageProblem,
    u: &DisutilitySpec,
    x: Option<&[f64]>,
    delta: f64,
) -> Result<CopositiveProgram> {
    assemble(p, x, delta, Some(u))
}

/// Builds and solves [`build_full_problem`] with settings for PSD programs.
pub fn solve_full_problem(p: &TwoStageProblem, delta: f64) -> Result<CopositiveSolution> {
    build_full_problem(p, delta)?.solve(&SolveSettings::psd())
}

/// Builds and solves [`build_wce_upper`] with settings for PSD programs.
pub fn solve_wce_upper(p: &TwoStageProblem, x: &[f64], delta: f64) -> Result<CopositiveSolution> {
    build_wce_upper(p, x, delta)?.solve(&SolveSettings::psd())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::Cone;
    use crate::oracles::SumMaxRecourse;
    use nalgebra::DMatrix;

    fn c0_feasible(m: DMatrix<f64>) -> SolveStatus {
        let mut b = ProgramBuilder::new();
        let mut e = ExprMatrix::new(m.nrows());
        for i in 0..m.nrows() {
            for j in i..m.ncols() {
                e.add_sym(i, j, &LinExpr::constant(m[(i, j)]), 1.0);
            }
        }
        build_c0_block(&mut b, "m", &e).unwrap();
        solve(&b.build(), &SolveSettings::psd()).unwrap().status
    }

    #[test]
    fn c0_membership_small_cases() {
        assert_eq!(c0_feasible(DMatrix::identity(2, 2)), SolveStatus::Optimal);
        assert_eq!(c0_feasible(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])), SolveStatus::Optimal);
        assert_eq!(c0_feasible(DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0])), SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn c0_block_shape() {
        let mut b = ProgramBuilder::new();
        let v = b.var("v");
        let mut m = ExprMatrix::new(3);
        for i in 0..3 {
            m.add_sym(i, i, &v.into(), 1.0);
        }
        let n = build_c0_block(&mut b, "m", &m).unwrap();
        assert_eq!(n.len(), 6);
        let p = b.build();
        assert_eq!(p.cones, vec![Cone::NonNeg(6), Cone::Psd(3)]);
        assert!(build_c0_block(&mut ProgramBuilder::new(), "m", &ExprMatrix::new(0)).is_err());
    }

    #[test]
    fn c0_zero_diagonal_reduction() {
        // A zero diagonal entry with a negative off-diagonal entry is infeasible,
        // not only in the limit.
        assert_eq!(c0_feasible(DMatrix::from_row_slice(2, 2, &[5.0, -0.5, -0.5, 0.0])), SolveStatus::PrimalInfeasible);
        assert_eq!(c0_feasible(DMatrix::from_row_slice(2, 2, &[5.0, 0.5, 0.5, 0.0])), SolveStatus::Optimal);
        let mut b = ProgramBuilder::new();
        let v = b.var("v");
        let mut m = ExprMatrix::new(3);
        m.add_sym(0, 0, &v.into(), 1.0);
        m.add_sym(2, 2, &v.into(), 1.0);
        build_c0_block(&mut b, "m", &m).unwrap();
        assert_eq!(b.build().cones, vec![Cone::NonNeg(6), Cone::Zero(3), Cone::Psd(2)]);
    }

    fn unit_summax() -> TwoStageProblem {
        SumMaxRecourse::new(&DMatrix::from_element(1, 1, 1.0), &[0.0], vec![0.0], vec![1.0])
            .unwrap()
            .to_problem(&[DVector::from_element(1, 0.0)], 1.0)
    }

    #[test]
    fn block_side_and_labels() {
        let p = unit_summax();
        let cp = build_wce_upper(&p, &[], 0.0).unwrap();
        let k = p.k();
        let side = k + p.recourse.m() + p.support.rows() + 1;
        assert!(cp.program.cones.contains(&Cone::Psd(side)));
        assert!(cp.program.block_labels.iter().any(|l| l == "copositive[i=0].P"));
        assert_eq!(cp.bound(), BoundKind::UpperBound);
    }

    #[test]
    fn unit_radius_summax() {
        let sol = solve_wce_upper(&unit_summax(), &[], 0.0).unwrap();
        assert!(sol.is_optimal());
        assert!(sol.objective >= 1.0 - 1e-6 && sol.objective <= 1.05, "{}", sol.objective);
    }

    #[test]
    fn zero_radius_rejected() {
        let p = unit_summax().with_epsilon(0.0);
        assert!(matches!(build_wce_upper(&p, &[], 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn disutility_validation() {
        assert!(DisutilitySpec::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(DisutilitySpec::new(vec![-1.0], vec![0.0]).is_err());
        assert!(DisutilitySpec::new(vec![], vec![]).is_err());
        let u = DisutilitySpec::cvar(0.25).unwrap();
        assert_eq!(u.eval(-1.0), 0.0);
        assert_eq!(u.eval(2.0), 8.0);
    }
}
