use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Provenance;
use crate::conic::{solve, ExprMatrix, LinExpr, ProgramBuilder, SolveSettings, Var};
use crate::model::{GroundNorm, TwoStageProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleDegree {
    Affine,
    Quadratic,
}

impl std::str::FromStr for RuleDegree {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(RuleDegree::Affine),
            "quadratic" => Ok(RuleDegree::Quadratic),
            o => Err(Error::InvalidInput(format!("unknown decision rule degree {o:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRuleBound {
    pub value: f64,
    pub lambda: f64,
    pub degree: RuleDegree,
    pub provenance: Provenance,
}

/// Linear description `G [xi; 1] >= 0` of the support.
fn support_rows(p: &TwoStageProblem) -> DMatrix<f64> {
    let k = p.k();
    let sp = &p.support;
    let nn = if sp.nonnegative { k } else { 0 };
    let mut g = DMatrix::zeros(nn + sp.rows(), k + 1);
    for c in 0..nn {
        g[(c, c)] = 1.0;
    }
    for j in 0..sp.rows() {
        for c in 0..k {
            g[(nn + j, c)] = -sp.s[(j, c)];
        }
        g[(nn + j, k)] = sp.t[j];
    }
    g
}

#[derive(Clone, Copy, PartialEq)]
enum Certificate {
    /// Affine functions only: `f = sum mu_l g_l + mu_0` (LP duality).
    Farkas,
    /// `M = sym(sum mu_l e g_l') + P`, P PSD.
    Lagrange,
    /// As `Lagrange`, plus pairwise products `G' N G` with `N >= 0`.
    Products,
}

/// Adds constraints certifying `[xi;1]' m [xi;1] >= 0` on the support.
fn certify(b: &mut ProgramBuilder, label: &str, m: &ExprMatrix, g: &DMatrix<f64>, kind: Certificate) {
    let side = m.side();
    let k = side - 1;
    let l = g.nrows();
    let mut rem = m.clone();
    if l > 0 {
        let mu = b.vars(&format!("{label}.mu"), l);
        b.add_nonneg(format!("{label}.mu>=0"), mu.iter().map(|&v| v.into()).collect());
        for (r, &v) in mu.iter().enumerate() {
            let e = LinExpr::from(v);
            for c in 0..k {
                if g[(r, c)] != 0.0 {
                    rem.add_sym(c, k, &e, -0.5 * g[(r, c)]);
                }
            }
            rem.add_sym(k, k, &e, -g[(r, k)]);
        }
    }
    if kind == Certificate::Products && l > 0 {
        let mut nv: Vec<Var> = Vec::new();
        for a in 0..l {
            for c in a..l {
                let v = b.var(format!("{label}.N[{a},{c}]"));
                nv.push(v);
                let e = LinExpr::from(v);
                for i in 0..side {
                    for j in i..side {
                        let coef =
                            if a == c { g[(a, i)] * g[(a, j)] } else { g[(a, i)] * g[(c, j)] + g[(c, i)] * g[(a, j)] };
                        if coef != 0.0 {
                            rem.add_sym(i, j, &e, -coef);
                        }
                    }
                }
            }
        }
        b.add_nonneg(format!("{label}.N>=0"), nv.iter().map(|&v| v.into()).collect());
    }
    match kind {
        Certificate::Farkas => {
            let mut zero = Vec::new();
            for j in 0..side {
                for i in 0..=j {
                    if (i, j) == (k, k) {
                        continue;
                    }
                    let e = rem.symmetric_entry(i, j);
                    if !(e.is_constant() && e.constant == 0.0) {
                        zero.push(e);
                    }
                }
            }
            if !zero.is_empty() {
                b.add_zero(format!("{label}.match"), zero);
            }
            b.add_nonneg(format!("{label}.mu0"), vec![rem.symmetric_entry(k, k)]);
        }
        _ => b.add_psd(format!("{label}.P"), &rem),
    }
}

/// Upper bound on the worst-case expected recourse cost at `x`, from
/// restricting the recourse decision to an affine or quadratic function of
/// `xi` that is feasible for every `xi` in the support.
///
/// Requires `Q = 0` and the type-2 metric. Each semi-infinite row is
/// certified with multipliers on the support constraints (affine rules:
/// LP duality; quadratic rules: multipliers, pairwise products and a PSD
/// remainder). The worst-case expectation of the rule's cost uses the
/// dual formula with one certified quadratic row per sample.
pub fn decision_rule_bound(p: &TwoStageProblem, x: &[f64], degree: RuleDegree) -> Result<DecisionRuleBound> {
    p.check_dimensions()?;
    if !p.recourse.q_is_zero() {
        return Err(Error::Precondition("decision-rule bounds need Q = 0".into()));
    }
    if p.metric.order != 2 || p.metric.norm != GroundNorm::Euclidean {
        return Err(Error::Precondition("decision-rule bounds use the type-2 Euclidean metric".into()));
    }
    let eps = p.metric.epsilon;
    if !(eps > 0.0) {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    if x.len() != p.n1() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.n1())));
    }
    if p.samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let r = &p.recourse;
    let (k, n2, m) = (p.k(), r.n2(), r.m());
    let side = k + 1;
    let g = support_rows(p);
    let t = r.t.eval(x);
    let h = r.h.eval(x);

    let mut b = ProgramBuilder::new();
    // Homogenized rule matrices: [xi;1]' H_n [xi;1] = y_n(xi).
    let mut rules = Vec::with_capacity(n2);
    for n in 0..n2 {
        let mut hm = ExprMatrix::new(side);
        let c0 = b.var(format!("y[{n}].const"));
        hm.add_sym(k, k, &c0.into(), 1.0);
        for c in 0..k {
            let v = b.var(format!("y[{n}].lin[{c}]"));
            hm.add_sym(c, k, &v.into(), 0.5);
        }
        if degree == RuleDegree::Quadratic {
            for j in 0..k {
                for i in 0..=j {
                    let v = b.var(format!("y[{n}].quad[{i},{j}]"));
                    hm.add_sym(i, j, &v.into(), 1.0);
                }
            }
        }
        rules.push(hm);
    }
    let (row_cert, obj_cert) = match degree {
        RuleDegree::Affine => (Certificate::Farkas, Certificate::Lagrange),
        RuleDegree::Quadratic => (Certificate::Products, Certificate::Products),
    };

    for row in 0..m {
        let mut mm = ExprMatrix::new(side);
        for (n, hm) in rules.iter().enumerate() {
            mm.add_matrix(hm, r.w[(row, n)]);
        }
        for c in 0..k {
            mm.add_sym(c, k, &LinExpr::constant(-t[(row, c)]), 0.5);
        }
        mm.add_sym(k, k, &LinExpr::constant(-h[row]), 1.0);
        certify(&mut b, &format!("rule-row[{row}]"), &mm, &g, row_cert);
    }

    let lambda = b.nonneg_var("lambda");
    let s = b.vars("s", p.samples.len());
    for (i, xi) in p.samples.iter().enumerate() {
        let mut mm = ExprMatrix::new(side);
        mm.add_sym(k, k, &s[i].into(), 1.0);
        for (n, hm) in rules.iter().enumerate() {
            mm.add_matrix(hm, -r.q[n]);
        }
        let lam = LinExpr::from(lambda);
        for c in 0..k {
            mm.add_sym(c, c, &lam, 1.0);
            mm.add_sym(c, k, &lam, -xi[c]);
        }
        mm.add_sym(k, k, &lam, xi.norm_squared());
        certify(&mut b, &format!("objective[{i}]"), &mm, &g, obj_cert);
    }
    let mut obj = LinExpr::term(lambda, eps * eps);
    for &v in &s {
        obj.add_term(v, 1.0 / p.samples.len() as f64);
    }
    b.minimize(obj);
    let settings = SolveSettings::psd();
    let res = solve(&b.build(), &settings)?;
    let value = res.value()?;
    Ok(DecisionRuleBound {
        value,
        lambda: res.x[lambda.0],
        degree,
        provenance: Provenance {
            method: format!("{degree:?} decision rule"),
            grid_per_dim: None,
            tolerance: settings.feas_tol,
        },
    })
}
