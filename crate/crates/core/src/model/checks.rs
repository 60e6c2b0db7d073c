use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::TwoStageProblem;
use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings, SolveStatus};
use crate::{Error, Result, FEAS_TOL, STRICT_MARGIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompleteRecourse {
    pub flag: bool,
    /// `y+` with `W y+ > 0`, scaled to unit infinity-norm.
    pub certificate: Option<Vec<f64>>,
}

/// Decides whether some `y` has `W y > 0` via `max { z : W y >= z 1, z <= 1 }`.
pub fn check_complete_recourse(w: &DMatrix<f64>) -> Result<CompleteRecourse> {
    let (m, n2) = w.shape();
    if m == 0 {
        return Err(Error::Precondition("W must have at least one row".into()));
    }
    let none = CompleteRecourse { flag: false, certificate: None };
    if n2 == 0 {
        return Ok(none);
    }
    let mut b = ProgramBuilder::new();
    let y = b.vars("y", n2);
    let z = b.var("z");
    let rows = (0..m)
        .map(|r| {
            let mut e = LinExpr::term(z, -1.0);
            for (n, &v) in y.iter().enumerate() {
                e.add_term(v, w[(r, n)]);
            }
            e
        })
        .collect();
    b.add_nonneg("Wy>=z", rows);
    b.add_nonneg("z<=1", vec![LinExpr::constant(1.0) - z]);
    b.minimize(-LinExpr::from(z));
    let r = solve(&b.build(), &SolveSettings::default())?;
    if !r.is_optimal() {
        return Err(Error::solver(r.status, r.diagnostics));
    }
    let zval = r.x[z.0];
    if zval <= STRICT_MARGIN {
        return Ok(none);
    }
    let yv = DVector::from_iterator(n2, y.iter().map(|v| r.x[v.0]));
    let scale = yv.amax();
    if scale == 0.0 {
        return Ok(none);
    }
    let yv = yv / scale;
    let margin = (w * &yv).min();
    if margin < STRICT_MARGIN {
        return Ok(none);
    }
    Ok(CompleteRecourse { flag: true, certificate: Some(yv.as_slice().to_vec()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpensiveReport {
    /// One entry per query point, or a single entry when the answer does not
    /// depend on the point.
    pub per_point: Vec<bool>,
    /// True when `Q = 0`, so the dual feasible set is the same for every point.
    pub point_independent: bool,
    pub warnings: Vec<String>,
}

impl ExpensiveReport {
    pub fn all(&self) -> bool {
        self.per_point.iter().all(|b| *b)
    }
}

/// `{ p >= 0 : W'p = c }` nonempty?
fn dual_feasible(w: &DMatrix<f64>, cost: &DVector<f64>) -> Result<bool> {
    let (m, n2) = w.shape();
    let mut b = ProgramBuilder::new();
    let p = b.vars("p", m);
    if m > 0 {
        b.add_nonneg("p>=0", p.iter().map(|&v| v.into()).collect());
    }
    if n2 > 0 {
        let rows = (0..n2)
            .map(|n| {
                let mut e = LinExpr::constant(-cost[n]);
                for (r, &v) in p.iter().enumerate() {
                    e.add_term(v, w[(r, n)]);
                }
                e
            })
            .collect();
        b.add_zero("W'p=Qxi+q", rows);
    }
    let r = solve(&b.build(), &SolveSettings::default())?;
    match r.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::PrimalInfeasible => Ok(false),
        s => Err(Error::solver(s, r.diagnostics)),
    }
}

/// Checks dual feasibility of the recourse problem at each supplied point.
///
/// This is only a pointwise certificate; it cannot prove the property on all
/// of the support.
pub fn check_sufficiently_expensive(p: &TwoStageProblem, points: &[DVector<f64>]) -> Result<ExpensiveReport> {
    p.check_dimensions()?;
    let r = &p.recourse;
    let mut warnings = Vec::new();
    if r.q_is_zero() {
        let ok = dual_feasible(&r.w, &r.q)?;
        let n = points.len().max(1);
        return Ok(ExpensiveReport { per_point: vec![ok; n], point_independent: true, warnings });
    }
    if points.is_empty() {
        return Err(Error::Precondition("Q is nonzero, so test points must be supplied".into()));
    }
    for (i, xi) in points.iter().enumerate() {
        if xi.len() != p.k() {
            return Err(Error::Dimension(format!("point {i} has length {}", xi.len())));
        }
        if !p.support.contains(xi, FEAS_TOL) {
            return Err(Error::Precondition(format!("point {i} lies outside the support")));
        }
    }
    if p.support.bounding_box()?.is_none() {
        let msg =
            "support is unbounded and Q is nonzero: the pointwise check does not certify the whole support".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let per_point = points.iter().map(|xi| dual_feasible(&r.w, &r.cost(xi))).collect::<Result<_>>()?;
    Ok(ExpensiveReport { per_point, point_independent: false, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Dimension,
    Metric,
    NoSamples,
    SampleOutsideSupport,
    EmptySupport,
    EmptyFirstStage,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, kind: FindingKind) -> bool {
        self.findings.iter().any(|f| f.kind == kind)
    }

    fn push(&mut self, kind: FindingKind, message: impl Into<String>) {
        self.findings.push(Finding { kind, message: message.into() });
    }
}

/// Collects every violated instance invariant. Never fails: solver problems
/// during the emptiness checks are reported as findings too.
pub fn validate(p: &TwoStageProblem) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let dims = p.dimension_problems();
    let shapes_ok = dims.is_empty();
    for d in dims {
        rep.push(FindingKind::Dimension, d);
    }
    if let Some(msg) = p.metric.problem() {
        rep.push(FindingKind::Metric, msg);
    }
    if p.samples.is_empty() {
        rep.push(FindingKind::NoSamples, "at least one sample is required");
    }
    let finite = p.c.iter().all(|v| v.is_finite())
        && p.samples.iter().all(|s| s.iter().all(|v| v.is_finite()))
        && p.support.s.iter().chain(p.support.t.iter()).all(|v| v.is_finite());
    if !finite {
        rep.push(FindingKind::NonFinite, "instance contains non-finite values");
    }
    if !shapes_ok || !finite {
        return rep;
    }
    for (i, s) in p.samples.iter().enumerate() {
        if !p.support.contains(s, FEAS_TOL) {
            rep.push(FindingKind::SampleOutsideSupport, format!("sample {i} lies outside the support"));
        }
    }
    match p.support.is_nonempty() {
        Ok(true) => {}
        Ok(false) => rep.push(FindingKind::EmptySupport, "the support polytope is empty"),
        Err(e) => rep.push(FindingKind::EmptySupport, format!("support emptiness check failed: {e}")),
    }
    let n1 = p.n1();
    if n1 > 0 {
        let mut b = ProgramBuilder::new();
        let x = b.vars("x", n1);
        p.first_stage.constrain(&mut b, &x);
        match solve(&b.build(), &SolveSettings::default()) {
            Ok(r) if r.status == SolveStatus::Optimal => {}
            Ok(r) if r.status == SolveStatus::PrimalInfeasible => {
                rep.push(FindingKind::EmptyFirstStage, "the first-stage set is empty")
            }
            Ok(r) => {
                rep.push(FindingKind::EmptyFirstStage, format!("first-stage check inconclusive: {}", r.diagnostics))
            }
            Err(e) => rep.push(FindingKind::EmptyFirstStage, format!("first-stage check failed: {e}")),
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_recourse_examples() {
        let r = check_complete_recourse(&DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap();
        assert!(r.flag);
        assert!((r.certificate.unwrap()[0] - 1.0).abs() < 1e-9);
        let r = check_complete_recourse(&DMatrix::from_row_slice(2, 1, &[1.0, -1.0])).unwrap();
        assert!(!r.flag && r.certificate.is_none());
        let mut w = DMatrix::zeros(6, 3);
        for k in 0..3 {
            w[(k, k)] = 1.0;
            w[(k + 3, k)] = 1.0;
        }
        let r = check_complete_recourse(&w).unwrap();
        assert!(r.flag);
        let y = DVector::from_vec(r.certificate.unwrap());
        assert!((&w * &y).min() >= STRICT_MARGIN);
        assert!((y.amax() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rows_rejected() {
        assert!(matches!(check_complete_recourse(&DMatrix::zeros(0, 2)), Err(Error::Precondition(_))));
    }
}
