use serde::{Deserialize, Serialize};

use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings};
use crate::model::TwoStageProblem;
use crate::{Error, Result};

fn check_level(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Precondition(format!("CVaR level must lie in (0, 1], got {rho}")));
    }
    Ok(())
}

/// Exact empirical CVaR: `min_theta theta + (1/(rho n)) sum (c - theta)^+`.
///
/// The minimum is attained at one of the costs, so every cost is tried as
/// `theta` using prefix sums over the descending order.
pub fn empirical_cvar(costs: &[f64], rho: f64) -> Result<f64> {
    check_level(rho)?;
    if costs.is_empty() {
        return Err(Error::Precondition("at least one cost is required".into()));
    }
    let mut sorted = costs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len() as f64;
    let mut prefix = 0.0;
    let mut best = f64::INFINITY;
    for (j, &theta) in sorted.iter().enumerate() {
        // sum over larger costs of (c - theta)
        let excess = prefix - j as f64 * theta;
        best = best.min(theta + excess / (rho * n));
        prefix += theta;
    }
    Ok(best)
}

/// The same quantity as [`empirical_cvar`], computed by the linear program
/// `min theta + (1/(rho n)) sum u_i, u_i >= c_i - theta, u >= 0`.
pub fn saa_cvar_costs(costs: &[f64], rho: f64) -> Result<f64> {
    check_level(rho)?;
    if costs.is_empty() {
        return Err(Error::Precondition("at least one cost is required".into()));
    }
    let mut b = ProgramBuilder::new();
    let theta = b.var("theta");
    let u = b.vars("u", costs.len());
    let mut rows: Vec<LinExpr> = u.iter().map(|&v| v.into()).collect();
    rows.extend(u.iter().zip(costs).map(|(&v, &c)| LinExpr::from(v) + theta - c));
    b.add_nonneg("excess", rows);
    let mut obj = LinExpr::from(theta);
    for &v in &u {
        obj.add_term(v, 1.0 / (rho * costs.len() as f64));
    }
    b.minimize(obj);
    solve(&b.build(), &SolveSettings::default())?.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaaCvarSolution {
    /// Empirical CVaR of the recourse cost.
    pub cvar: f64,
    /// `c'x + cvar`.
    pub objective: f64,
    pub x: Vec<f64>,
    pub theta: f64,
}

/// Empirical CVaR of `Z(x, xi_i)` over the samples of `p`, as one LP with
/// the recourse decisions of every sample. With `x = None` the first stage is
/// optimized jointly over the first-stage set.
pub fn saa_cvar(p: &TwoStageProblem, rho: f64, x: Option<&[f64]>) -> Result<SaaCvarSolution> {
    check_level(rho)?;
    p.check_dimensions()?;
    if p.samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let r = &p.recourse;
    let n1 = p.n1();
    let mut b = ProgramBuilder::new();
    let xe: Vec<LinExpr> = match x {
        Some(x) => {
            if x.len() != n1 {
                return Err(Error::Dimension(format!("x has length {}, expected {n1}", x.len())));
            }
            x.iter().map(|&v| LinExpr::constant(v)).collect()
        }
        None => {
            let xv = b.vars("x", n1);
            p.first_stage.constrain(&mut b, &xv);
            xv.iter().map(|&v| v.into()).collect()
        }
    };
    let theta = b.var("theta");
    let n = p.samples.len();
    let mut obj = LinExpr::from(theta);
    for (i, xi) in p.samples.iter().enumerate() {
        let y = b.vars(&format!("y[{i}]"), r.n2());
        let u = b.nonneg_var(format!("u[{i}]"));
        let cost = r.cost(xi);
        let mut excess = LinExpr::from(u) + theta;
        for (nn, &v) in y.iter().enumerate() {
            excess.add_term(v, -cost[nn]);
        }
        b.add_nonneg(format!("u>=Z-theta[{i}]"), vec![excess]);
        let rows = (0..r.m())
            .map(|m| {
                let mut e = LinExpr::zero();
                for (nn, &v) in y.iter().enumerate() {
                    e.add_term(v, r.w[(m, nn)]);
                }
                for c in 0..p.k() {
                    e.add_scaled(&r.t.entry_expr(m, c, &xe), -xi[c]);
                }
                e.add_scaled(&r.h.entry_expr(m, &xe), -1.0);
                e
            })
            .collect();
        b.add_nonneg(format!("recourse[{i}]"), rows);
        obj.add_term(u, 1.0 / (rho * n as f64));
    }
    let mut full = obj.clone();
    for (c, e) in p.c.iter().zip(&xe) {
        full.add_scaled(e, *c);
    }
    b.minimize(full);
    let res = solve(&b.build(), &SolveSettings::default())?;
    let objective = res.value()?;
    let xs: Vec<f64> = xe.iter().map(|e| e.eval(&res.x)).collect();
    let cx: f64 = p.c.iter().zip(&xs).map(|(c, x)| c * x).sum();
    Ok(SaaCvarSolution { cvar: objective - cx, objective, x: xs, theta: res.x[theta.0] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_half_of_one_to_ten() {
        let c: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((empirical_cvar(&c, 0.5).unwrap() - 8.0).abs() < 1e-12);
        assert!((saa_cvar_costs(&c, 0.5).unwrap() - 8.0).abs() < 1e-6);
        assert!((empirical_cvar(&c, 1.0).unwrap() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn constant_costs() {
        for rho in [0.05, 0.3, 1.0] {
            assert!((empirical_cvar(&[2.5; 7], rho).unwrap() - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn fractional_tail() {
        // rho n = 1.5: top cost plus half of the second.
        let c = [1.0, 4.0, 2.0, 3.0];
        let v = empirical_cvar(&c, 0.375).unwrap();
        assert!((v - (4.0 + 0.5 * 3.0) / 1.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn zero_level_rejected() {
        assert!(matches!(empirical_cvar(&[1.0], 0.0), Err(Error::Precondition(_))));
        assert!(matches!(saa_cvar_costs(&[1.0], 0.0), Err(Error::Precondition(_))));
    }
}
