use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{build_full_problem, CopositiveSolution};
use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings, SolveStatus};
use crate::model::TwoStageProblem;
use crate::{Error, Result};

/// `1e-1, 1e-2, ..., 1e-6, 0`.
pub fn default_schedule() -> Vec<f64> {
    let mut s: Vec<f64> = (1..=6).map(|e| 10f64.powi(-e)).collect();
    s.push(0.0);
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub delta: f64,
    pub status: SolveStatus,
    /// `+inf` when this delta is infeasible.
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub trajectory: Vec<RefinementStep>,
    /// Minimizer of the last feasible step.
    pub candidate: Vec<f64>,
    pub candidate_delta: f64,
    /// Whether `delta = 0` appeared in the schedule and solved to optimality.
    pub exact_solved: bool,
    /// Whether the positive part of the schedule stopped on the relative-change test.
    pub converged: bool,
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Precondition("delta schedule is empty".into()));
    }
    for (i, &d) in schedule.iter().enumerate() {
        let last = i + 1 == schedule.len();
        if !d.is_finite() || d < 0.0 || (d == 0.0 && !last) {
            return Err(Error::Precondition("delta schedule must be positive, optionally ending with 0".into()));
        }
        if i > 0 && d >= schedule[i - 1] {
            return Err(Error::Precondition("delta schedule must be strictly decreasing".into()));
        }
    }
    Ok(())
}

fn step(sol: &CopositiveSolution) -> RefinementStep {
    RefinementStep { delta: sol.delta, status: sol.status, value: sol.objective, x: sol.x.clone() }
}

/// Solves the joint copositive program for a decreasing sequence of `delta`.
///
/// The positive entries are solved in order until two consecutive feasible
/// values differ by at most `tol * max(1, |value|)`; a trailing `0` entry is
/// always attempted.
pub fn delta_refinement(p: &TwoStageProblem, schedule: &[f64], tol: f64) -> Result<Refinement> {
    check_schedule(schedule)?;
    let settings = SolveSettings::psd();
    let solve_at = |d: f64| -> Result<CopositiveSolution> {
        match build_full_problem(p, d)?.solve(&settings) {
            // Treat a breakdown at the boundary of feasibility as infeasible.
            Err(Error::Solver { status: SolveStatus::NumericalTrouble, .. }) if d == 0.0 => Ok(CopositiveSolution {
                status: SolveStatus::NumericalTrouble,
                delta: d,
                bound: super::BoundKind::for_delta(d),
                objective: f64::INFINITY,
                recourse_value: f64::INFINITY,
                x: Vec::new(),
                lambda: f64::NAN,
                theta: None,
                records: Vec::new(),
                solve_time: 0.0,
            }),
            r => r,
        }
    };
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    for &d in schedule.iter().filter(|d| **d > 0.0) {
        let sol = solve_at(d)?;
        trajectory.push(step(&sol));
        if sol.is_optimal() {
            if let Some(v) = prev {
                if (sol.objective - v).abs() <= tol * sol.objective.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            prev = Some(sol.objective);
        }
    }
    let mut exact_solved = false;
    if schedule.last() == Some(&0.0) {
        let sol = solve_at(0.0)?;
        exact_solved = sol.is_optimal();
        trajectory.push(step(&sol));
    }
    let last = trajectory.iter().rev().find(|s| s.status == SolveStatus::Optimal).ok_or(Error::NoFeasibleCandidate)?;
    Ok(Refinement { candidate: last.x.clone(), candidate_delta: last.delta, trajectory, exact_solved, converged })
}

/// Replaces the samples by a single point `xi_hat` and the radius by an `eps`
/// with `d(xi, xi_hat) <= eps` on the whole support, so that the worst-case
/// expectation becomes the worst case over the support.
///
/// `xi_hat` is the centre of the bounding box of the support projected onto
/// the support; `eps` is the length of the box diagonal, floored at `1e-6`.
pub fn robust_mode(p: &TwoStageProblem) -> Result<TwoStageProblem> {
    let sp = &p.support;
    let (lo, hi) = match sp.as_box() {
        Some(b) => b,
        None => sp.bounding_box()?.ok_or(Error::UnboundedSupport)?,
    };
    let k = lo.len();
    let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let centre = if sp.contains(&DVector::from_column_slice(&mid), crate::FEAS_TOL) {
        mid
    } else {
        let mut b = ProgramBuilder::new();
        let xi = sp.add_member(&mut b, "xi");
        let t = b.var("t");
        let mut cone = vec![LinExpr::from(t)];
        cone.extend(xi.iter().zip(&mid).map(|(&v, m)| LinExpr::from(v) - *m));
        b.add_soc("||xi-mid||<=t", cone);
        b.minimize(t.into());
        let r = solve(&b.build(), &SolveSettings::default())?;
        r.value()?;
        xi.iter().map(|v| r.x[v.0]).collect()
    };
    let norm = p.metric.norm;
    let eps = norm.distance(&lo, &hi).max(norm.distance(&hi, &lo)).max(1e-6);
    let mut out = p.clone();
    out.samples = vec![DVector::from_vec(centre)];
    out.metric.epsilon = eps;
    debug_assert_eq!(out.samples[0].len(), k);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SupportPolytope;
    use crate::oracles::SumMaxRecourse;
    use nalgebra::DMatrix;

    fn with_support(support: SupportPolytope) -> TwoStageProblem {
        let k = support.dim();
        let mut p = SumMaxRecourse::unit_box(&DMatrix::from_element(1, k, 1.0), &[0.0])
            .unwrap()
            .to_problem(&[DVector::zeros(k)], 1.0);
        p.support = support;
        p
    }

    #[test]
    fn schedule_validation() {
        assert!(check_schedule(&default_schedule()).is_ok());
        assert!(check_schedule(&[0.1, 0.1]).is_err());
        assert!(check_schedule(&[0.0, 0.1]).is_err());
        assert!(check_schedule(&[]).is_err());
        assert!(check_schedule(&[-1.0]).is_err());
    }

    #[test]
    fn robust_unit_square() {
        let r = robust_mode(&with_support(SupportPolytope::unit_box(2))).unwrap();
        assert_eq!(r.samples.len(), 1);
        assert_eq!(r.samples[0].as_slice(), &[0.5, 0.5]);
        assert!((r.epsilon() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn robust_unit_interval() {
        let r = robust_mode(&with_support(SupportPolytope::unit_box(1))).unwrap();
        assert_eq!(r.samples[0][0], 0.5);
        assert!((r.epsilon() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robust_singleton_floors_radius() {
        let sp = SupportPolytope::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 0.0)).unwrap();
        let r = robust_mode(&with_support(sp)).unwrap();
        assert_eq!(r.epsilon(), 1e-6);
        assert!(r.samples[0][0].abs() < 1e-9);
    }

    #[test]
    fn robust_unbounded_rejected() {
        assert!(matches!(robust_mode(&with_support(SupportPolytope::orthant(1))), Err(Error::UnboundedSupport)));
    }

    #[test]
    fn robust_simplex_centre_projected() {
        // Simplex x1 + x2 <= 1: box centre (0.5, 0.5) lies on the boundary; the
        // point must be in the support either way.
        let sp =
            SupportPolytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 1.0)).unwrap();
        let r = robust_mode(&with_support(sp.clone())).unwrap();
        assert!(sp.contains(&r.samples[0], 1e-7));
    }
}
