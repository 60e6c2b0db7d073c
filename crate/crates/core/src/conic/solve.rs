use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::{Cone, ConicProgram};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterLimit,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: u32,
    pub time_limit: f64,
    pub verbose: bool,
    /// Residual and gap threshold for accepting a reduced-accuracy termination
    /// as optimal; `None` uses `feas_tol` and `gap_tol`.
    pub reduced_tol: Option<f64>,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            time_limit: f64::INFINITY,
            verbose: false,
            reduced_tol: None,
        }
    }
}

impl SolveSettings {
    /// Settings for the copositive programs. Their optimal faces are
    /// unbounded, so residuals near 1e-7 can still leave the objective off in
    /// the third digit for small values; the targets are therefore tight and
    /// reduced-accuracy terminations are accepted within `1e-6`.
    pub fn psd() -> Self {
        SolveSettings { feas_tol: 1e-9, gap_tol: 1e-9, reduced_tol: Some(1e-6), ..Default::default() }
    }

    /// Tight tolerances for small LPs used as reference values; reduced-accuracy
    /// terminations within `1e-9` are accepted.
    pub fn tight() -> Self {
        SolveSettings { feas_tol: 1e-11, gap_tol: 1e-11, reduced_tol: Some(1e-9), ..Default::default() }
    }

    /// PSD tolerances that also accept reduced-accuracy terminations within `1e-5`.
    pub fn psd_relaxed() -> Self {
        SolveSettings { reduced_tol: Some(1e-5), ..Self::psd() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal point; empty unless `status` is `Optimal`.
    pub x: Vec<f64>,
    /// Dual multipliers of the conic constraints; empty unless `Optimal`.
    pub dual: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: u32,
    pub solve_time: f64,
    pub diagnostics: String,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// The primal objective if optimal, otherwise an error carrying the status.
    pub fn value(&self) -> Result<f64> {
        if self.is_optimal() {
            Ok(self.primal_objective)
        } else {
            Err(crate::Error::solver(self.status, self.diagnostics.clone()))
        }
    }
}

fn to_backend_cone(c: &Cone) -> SupportedConeT<f64> {
    match *c {
        Cone::Zero(n) => SupportedConeT::ZeroConeT(n),
        Cone::NonNeg(n) => SupportedConeT::NonnegativeConeT(n),
        Cone::SecondOrder(n) => SupportedConeT::SecondOrderConeT(n),
        Cone::Psd(k) => SupportedConeT::PSDTriangleConeT(k),
    }
}

fn trouble(detail: String) -> SolveResult {
    SolveResult {
        status: SolveStatus::NumericalTrouble,
        x: Vec::new(),
        dual: Vec::new(),
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        gap: f64::NAN,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        iterations: 0,
        solve_time: 0.0,
        diagnostics: detail,
    }
}

/// Solves `prog` with the interior-point backend.
///
/// `Optimal` is only reported when the primal and dual residuals are below
/// `feas_tol` and the relative gap is below `gap_tol`; reduced-accuracy
/// terminations that miss either threshold come back as `NumericalTrouble`.
pub fn solve(prog: &ConicProgram, settings: &SolveSettings) -> Result<SolveResult> {
    prog.check()?;
    let n = prog.num_vars();
    let m = prog.num_rows();

    if n == 0 {
        // Constant program: feasible iff b lies in the cone.
        return Ok(constant_program(prog));
    }

    let (rows, (cols, vals)): (Vec<usize>, (Vec<usize>, Vec<f64>)) =
        prog.a.iter().map(|&(r, c, v)| (r, (c, v))).unzip();
    let a = CscMatrix::new_from_triplets(m, n, rows, cols, vals);
    let p = CscMatrix::<f64>::zeros((n, n));
    let cones: Vec<_> = prog.cones.iter().map(to_backend_cone).collect();

    let backend = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .time_limit(settings.time_limit)
        .tol_feas(settings.feas_tol)
        .tol_gap_abs(settings.gap_tol)
        .tol_gap_rel(settings.gap_tol)
        .presolve_enable(false)
        .build();
    let backend = match backend {
        Ok(b) => b,
        Err(e) => return Ok(trouble(format!("backend settings rejected: {e:?}"))),
    };
    let mut solver = match DefaultSolver::new(&p, &prog.objective, &a, &prog.b, &cones, backend) {
        Ok(s) => s,
        Err(e) => return Ok(trouble(format!("backend setup failed: {e:?}"))),
    };
    solver.solve();

    let sol = &solver.solution;
    let info = &solver.info;
    let offset = prog.objective_offset;
    let (feas_tol, gap_tol) = match settings.reduced_tol {
        Some(t) => (t, t),
        None => (settings.feas_tol, settings.gap_tol),
    };
    let meets_tolerances = info.res_primal <= feas_tol
        && info.res_dual <= feas_tol
        && (info.gap_rel <= gap_tol || info.gap_abs <= gap_tol);

    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved if meets_tolerances => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::PrimalInfeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::DualInfeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterLimit,
        _ => SolveStatus::NumericalTrouble,
    };
    let optimal =
        status == SolveStatus::Optimal && sol.x.iter().all(|v| v.is_finite()) && sol.z.iter().all(|v| v.is_finite());
    let status = if status == SolveStatus::Optimal && !optimal { SolveStatus::NumericalTrouble } else { status };
    let diagnostics = format!(
        "backend status {:?}; iterations {}; res_primal {:.3e}; res_dual {:.3e}; gap_abs {:.3e}; gap_rel {:.3e}",
        sol.status, info.iterations, info.res_primal, info.res_dual, info.gap_abs, info.gap_rel
    );
    log::debug!("{diagnostics}");

    Ok(SolveResult {
        status,
        x: if optimal { sol.x.clone() } else { Vec::new() },
        dual: if optimal { sol.z.clone() } else { Vec::new() },
        primal_objective: sol.obj_val + offset,
        dual_objective: sol.obj_val_dual + offset,
        gap: info.gap_abs,
        primal_residual: info.res_primal,
        dual_residual: info.res_dual,
        iterations: info.iterations,
        solve_time: sol.solve_time,
        diagnostics,
    })
}

fn constant_program(prog: &ConicProgram) -> SolveResult {
    let mut feasible = true;
    for (cone, range) in prog.cones.iter().zip(prog.block_ranges()) {
        let s = &prog.b[range];
        let ok = match cone {
            Cone::Zero(_) => s.iter().all(|v| v.abs() <= 1e-9),
            Cone::NonNeg(_) => s.iter().all(|&v| v >= -1e-9),
            Cone::SecondOrder(_) => s[0] + 1e-9 >= s[1..].iter().map(|v| v * v).sum::<f64>().sqrt(),
            Cone::Psd(_) => super::smat(s).map(|m| m.symmetric_eigenvalues().min() >= -1e-9).unwrap_or(false),
        };
        feasible &= ok;
    }
    let v = prog.objective_offset;
    SolveResult {
        status: if feasible { SolveStatus::Optimal } else { SolveStatus::PrimalInfeasible },
        x: Vec::new(),
        dual: Vec::new(),
        primal_objective: v,
        dual_objective: v,
        gap: 0.0,
        primal_residual: 0.0,
        dual_residual: 0.0,
        iterations: 0,
        solve_time: 0.0,
        diagnostics: "constant program".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ExprMatrix, LinExpr, ProgramBuilder};

    #[test]
    fn simple_bound() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x");
        b.add_nonneg("x>=1", vec![LinExpr::from(x) - 1.0]);
        b.minimize(x.into());
        let r = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal_objective - 1.0).abs() < 1e-7);
        assert!(r.primal_objective >= r.dual_objective - 1e-8);
    }

    #[test]
    fn infeasible_bounds() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x");
        b.add_nonneg("rows", vec![LinExpr::from(x) - 1.0, -LinExpr::from(x)]);
        let r = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::PrimalInfeasible);
        assert!(r.x.is_empty());
    }

    #[test]
    fn unbounded_detected() {
        let mut b = ProgramBuilder::new();
        let x = b.var("x");
        b.add_nonneg("x<=0", vec![-LinExpr::from(x)]);
        b.minimize(x.into());
        let r = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::DualInfeasible);
    }

    #[test]
    fn largest_eigenvalue_via_psd() {
        // min t s.t. t I - diag(1, 3) PSD  =>  t = 3
        let mut b = ProgramBuilder::new();
        let t = b.var("t");
        let mut m = ExprMatrix::new(2);
        m.get_mut(0, 0).add_term(t, 1.0).add_const(-1.0);
        m.get_mut(1, 1).add_term(t, 1.0).add_const(-3.0);
        b.add_psd("tI-A", &m);
        b.minimize(t.into());
        let r = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.primal_objective - 3.0).abs() < 1e-6);
    }

    #[test]
    fn objective_offset_applied() {
        let mut b = ProgramBuilder::new();
        let x = b.nonneg_var("x");
        b.minimize(LinExpr::from(x) + 2.5);
        let r = solve(&b.build(), &SolveSettings::default()).unwrap();
        assert!((r.primal_objective - 2.5).abs() < 1e-7);
    }
}
