use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings, SolveStatus};
use crate::model::TwoStageProblem;
use crate::{Error, Result};

/// Agreement required between the primal and dual recourse values.
pub const DUALITY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseSolution {
    /// `+inf` when infeasible, `-inf` when unbounded.
    pub value: f64,
    /// Optimal second-stage decision (empty unless the value is finite).
    pub y: Vec<f64>,
}

fn check_point(p: &TwoStageProblem, x: &[f64], xi: &DVector<f64>) -> Result<()> {
    p.check_dimensions()?;
    if x.len() != p.n1() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.n1())));
    }
    if xi.len() != p.k() {
        return Err(Error::Dimension(format!("xi has length {}, expected {}", xi.len(), p.k())));
    }
    Ok(())
}

/// Solves `min (Q xi + q)'y s.t. W y >= T(x) xi + h(x)` without the dual cross-check.
pub fn recourse_primal(p: &TwoStageProblem, x: &[f64], xi: &DVector<f64>) -> Result<RecourseSolution> {
    check_point(p, x, xi)?;
    let r = &p.recourse;
    let cost = r.cost(xi);
    let rhs = r.rhs(x, xi);
    let mut b = ProgramBuilder::new();
    let y = b.vars("y", r.n2());
    let rows = (0..r.m())
        .map(|i| {
            let mut e = LinExpr::constant(-rhs[i]);
            for (n, &v) in y.iter().enumerate() {
                e.add_term(v, r.w[(i, n)]);
            }
            e
        })
        .collect();
    b.add_nonneg("Wy>=T(x)xi+h(x)", rows);
    let mut obj = LinExpr::zero();
    for (n, &v) in y.iter().enumerate() {
        obj.add_term(v, cost[n]);
    }
    b.minimize(obj);
    let res = solve(&b.build(), &SolveSettings::tight())?;
    match res.status {
        SolveStatus::Optimal => Ok(RecourseSolution { value: res.primal_objective, y: res.x }),
        SolveStatus::PrimalInfeasible => Ok(RecourseSolution { value: f64::INFINITY, y: Vec::new() }),
        SolveStatus::DualInfeasible => Ok(RecourseSolution { value: f64::NEG_INFINITY, y: Vec::new() }),
        s => Err(Error::solver(s, res.diagnostics)),
    }
}

/// Solves `sup (T(x) xi + h(x))'p s.t. p >= 0, W'p = Q xi + q`.
/// Returns `-inf` when infeasible and `+inf` when unbounded.
pub fn recourse_dual_value(p: &TwoStageProblem, x: &[f64], xi: &DVector<f64>) -> Result<f64> {
    check_point(p, x, xi)?;
    let r = &p.recourse;
    let cost = r.cost(xi);
    let rhs = r.rhs(x, xi);
    let mut b = ProgramBuilder::new();
    let pv = b.vars("p", r.m());
    if !pv.is_empty() {
        b.add_nonneg("p>=0", pv.iter().map(|&v| v.into()).collect());
    }
    let rows: Vec<LinExpr> = (0..r.n2())
        .map(|n| {
            let mut e = LinExpr::constant(-cost[n]);
            for (i, &v) in pv.iter().enumerate() {
                e.add_term(v, r.w[(i, n)]);
            }
            e
        })
        .collect();
    if !rows.is_empty() {
        b.add_zero("W'p=Qxi+q", rows);
    }
    let mut obj = LinExpr::zero();
    for (i, &v) in pv.iter().enumerate() {
        obj.add_term(v, -rhs[i]);
    }
    b.minimize(obj);
    let res = solve(&b.build(), &SolveSettings::tight())?;
    match res.status {
        SolveStatus::Optimal => Ok(-res.primal_objective),
        SolveStatus::PrimalInfeasible => Ok(f64::NEG_INFINITY),
        SolveStatus::DualInfeasible => Ok(f64::INFINITY),
        s => Err(Error::solver(s, res.diagnostics)),
    }
}

/// `Z(x, xi)`, with `+inf` for an infeasible and `-inf` for an unbounded
/// recourse problem. Finite values are confirmed by solving the dual LP.
pub fn recourse_value(p: &TwoStageProblem, x: &[f64], xi: &DVector<f64>) -> Result<f64> {
    let primal = recourse_primal(p, x, xi)?.value;
    if !primal.is_finite() {
        return Ok(primal);
    }
    let dual = recourse_dual_value(p, x, xi)?;
    if !dual.is_finite() || (primal - dual).abs() > DUALITY_TOL * primal.abs().max(1.0) {
        return Err(Error::solver(
            SolveStatus::NumericalTrouble,
            format!("recourse primal {primal} and dual {dual} disagree"),
        ));
    }
    Ok(primal)
}
