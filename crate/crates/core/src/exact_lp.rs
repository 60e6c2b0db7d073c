//! Exact linear program for 1-Wasserstein balls under the weighted max-norm
//! when the uncertainty only enters the constraints of the recourse problem
//! (`Q = 0`) and the support is the whole space.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{solve, LinExpr, ProgramBuilder, SolveSettings, SolveStatus, Var};
use crate::model::{
    AffineMatrix, AffineVector, FirstStageSet, GroundNorm, MetricConfig, RecourseData, SupportPolytope, TwoStageProblem,
};
use crate::oracles::recourse_value;
use crate::{Error, Result};

/// `max_k max{ z_k / w_plus, -z_k / w_minus }`, the norm dual to the weighted
/// max-norm. Requires `w_plus, w_minus > 0`; returns 0 for an empty vector.
pub fn dual_norm(z: &[f64], w_plus: f64, w_minus: f64) -> f64 {
    debug_assert!(w_plus > 0.0 && w_minus > 0.0);
    z.iter().map(|&v| (v / w_plus).max(-v / w_minus)).fold(0.0, f64::max)
}

fn weights(p: &TwoStageProblem) -> Result<(f64, f64)> {
    match (p.metric.order, p.metric.norm) {
        (1, GroundNorm::WeightedMax { w_plus, w_minus }) if w_plus > 0.0 && w_minus > 0.0 => Ok((w_plus, w_minus)),
        (1, GroundNorm::WeightedMax { .. }) => {
            Err(Error::Precondition("weighted-max scaling parameters must be positive".into()))
        }
        (1, GroundNorm::PNorm { .. }) | (1, GroundNorm::Euclidean) => Err(Error::Precondition(
            "p-norm ground metrics with p > 1 are rejected: the worst-case expectation is NP-hard \
             to compute (reduction from matrix norm maximization)"
                .into(),
        )),
        (r, _) => Err(Error::Precondition(format!(
            "the exact linear program needs the type-1 Wasserstein metric, got order {r}"
        ))),
    }
}

fn check(p: &TwoStageProblem) -> Result<(f64, f64)> {
    p.check_dimensions()?;
    if !p.recourse.q_is_zero() {
        return Err(Error::Precondition(
            "Q must vanish: with uncertain recourse costs the problem is NP-hard even for type-1 balls".into(),
        ));
    }
    if p.samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    if !(p.metric.epsilon >= 0.0) {
        return Err(Error::Precondition("radius must be nonnegative".into()));
    }
    weights(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinLpSolution {
    pub status: SolveStatus,
    /// `c'x + eps lambda + (1/I) sum q'y_i`.
    pub objective: f64,
    /// `objective - c'x`.
    pub recourse_value: f64,
    pub x: Vec<f64>,
    pub lambda: f64,
    pub y: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct LpLayout {
    x: Vec<LinExpr>,
    lambda: Var,
    y: Vec<Vec<Var>>,
    phi: Vec<Vec<Var>>,
    psi: Vec<Vec<Var>>,
}

/// The exact LP together with the handles needed to read back a solution.
#[derive(Debug, Clone)]
pub struct WassersteinLp {
    pub program: crate::conic::ConicProgram,
    c: Vec<f64>,
    layout: LpLayout,
}

impl WassersteinLp {
    pub fn solve(&self, settings: &SolveSettings) -> Result<WassersteinLpSolution> {
        let res = solve(&self.program, settings)?;
        let l = &self.layout;
        let inf = match res.status {
            SolveStatus::Optimal => None,
            SolveStatus::PrimalInfeasible => Some(f64::INFINITY),
            SolveStatus::DualInfeasible => Some(f64::NEG_INFINITY),
            s => return Err(Error::solver(s, res.diagnostics)),
        };
        if let Some(v) = inf {
            return Ok(WassersteinLpSolution {
                status: res.status,
                objective: v,
                recourse_value: v,
                x: Vec::new(),
                lambda: f64::NAN,
                y: Vec::new(),
                phi: Vec::new(),
                psi: Vec::new(),
            });
        }
        let z = &res.x;
        let vals = |vs: &Vec<Var>| vs.iter().map(|v| z[v.0]).collect::<Vec<_>>();
        let x: Vec<f64> = l.x.iter().map(|e| e.eval(z)).collect();
        let cx: f64 = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        Ok(WassersteinLpSolution {
            status: res.status,
            objective: res.primal_objective,
            recourse_value: res.primal_objective - cx,
            x,
            lambda: z[l.lambda.0],
            y: l.y.iter().map(vals).collect(),
            phi: l.phi.iter().map(vals).collect(),
            psi: l.psi.iter().map(vals).collect(),
        })
    }
}

/// Builds the exact LP. With `x = Some(..)` the first stage is frozen and the
/// LP value is `c'x` plus the worst-case expected recourse cost at `x`.
///
/// Support rows (or the nonnegativity flag) are ignored with a warning; the
/// value is then an upper bound for the supported problem.
pub fn build_lp_at(p: &TwoStageProblem, x: Option<&[f64]>) -> Result<WassersteinLp> {
    let (w_plus, w_minus) = check(p)?;
    let r = &p.recourse;
    let (k, n2, m) = (p.k(), r.n2(), r.m());
    let mut b = ProgramBuilder::new();
    if p.support.rows() > 0 || p.support.nonnegative {
        b.warn("support constraints are ignored by the exact LP; its value bounds the supported problem from above");
    }
    let xe: Vec<LinExpr> = match x {
        Some(x) => {
            if x.len() != p.n1() {
                return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.n1())));
            }
            x.iter().map(|&v| LinExpr::constant(v)).collect()
        }
        None => {
            let xv = b.vars("x", p.n1());
            p.first_stage.constrain(&mut b, &xv);
            xv.into_iter().map(LinExpr::from).collect()
        }
    };
    let lambda = b.nonneg_var("lambda");
    let eps = p.metric.epsilon;
    let inv_i = 1.0 / p.samples.len() as f64;
    let mut obj = LinExpr::term(lambda, eps);
    for (c, e) in p.c.iter().zip(&xe) {
        obj.add_scaled(e, *c);
    }

    // W v - (T(x) d + s h(x)) >= 0
    let recourse_rows = |v: &[Var], d: &[f64], s: f64| -> Vec<LinExpr> {
        (0..m)
            .map(|row| {
                let mut e = LinExpr::zero();
                for (n, &yv) in v.iter().enumerate() {
                    e.add_term(yv, r.w[(row, n)]);
                }
                for (c, &dc) in d.iter().enumerate() {
                    if dc != 0.0 {
                        e.add_scaled(&r.t.entry_expr(row, c, &xe), -dc);
                    }
                }
                if s != 0.0 {
                    e.add_scaled(&r.h.entry_expr(row, &xe), -s);
                }
                e
            })
            .collect()
    };

    let mut y = Vec::with_capacity(p.samples.len());
    for (i, xi) in p.samples.iter().enumerate() {
        let yi = b.vars(&format!("y[{i}]"), n2);
        for (n, &v) in yi.iter().enumerate() {
            obj.add_term(v, inv_i * r.q[n]);
        }
        let rows = recourse_rows(&yi, xi.as_slice(), 1.0);
        b.add_nonneg(format!("sample[i={i}]:Wy>=T(x)xi+h(x)"), rows);
        y.push(yi);
    }
    let mut phi = Vec::with_capacity(k);
    let mut psi = Vec::with_capacity(k);
    for c in 0..k {
        for (sign, w, name, store) in [(1.0, w_plus, "phi", &mut phi), (-1.0, w_minus, "psi", &mut psi)] {
            let v = b.vars(&format!("{name}[{c}]"), n2);
            let mut cap = LinExpr::from(lambda);
            for (n, &vv) in v.iter().enumerate() {
                cap.add_term(vv, -r.q[n]);
            }
            b.add_nonneg(format!("{name}[k={c}]:q'v<=lambda"), vec![cap]);
            let mut d = vec![0.0; k];
            d[c] = sign / w;
            let rows = recourse_rows(&v, &d, 0.0);
            b.add_nonneg(format!("{name}[k={c}]:Wv>=T(x)e_k/w"), rows);
            store.push(v);
        }
    }
    b.minimize(obj);
    Ok(WassersteinLp {
        program: b.build(),
        c: p.c.iter().copied().collect(),
        layout: LpLayout { x: xe, lambda, y, phi, psi },
    })
}

/// The exact LP with the first stage optimized over its feasible set.
pub fn build_lp(p: &TwoStageProblem) -> Result<WassersteinLp> {
    build_lp_at(p, None)
}

pub fn solve_lp(p: &TwoStageProblem) -> Result<WassersteinLpSolution> {
    build_lp(p)?.solve(&SolveSettings::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedEvaluation {
    /// `eps lambda_star + (1/I) sum_i Z(x, xi_i)`.
    pub value: f64,
    /// `sup { ||T(x)'p||_* : p >= 0, W'p = q }`.
    pub lambda_star: f64,
    pub sample_values: Vec<f64>,
}

/// Worst-case expected recourse cost at a fixed `x`, evaluated through the
/// closed-form multiplier `lambda_star` (2K small LPs) and the sample recourse
/// values.
pub fn evaluate_fixed_x(p: &TwoStageProblem, x: &[f64]) -> Result<FixedEvaluation> {
    let (w_plus, w_minus) = check(p)?;
    if x.len() != p.n1() {
        return Err(Error::Dimension(format!("x has length {}, expected {}", x.len(), p.n1())));
    }
    let r = &p.recourse;
    let t = r.t.eval(x);
    let k = p.k();
    let jobs: Vec<(usize, f64, f64)> = (0..k).flat_map(|c| [(c, 1.0, w_plus), (c, -1.0, w_minus)]).collect();
    let sups: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, sign, w)| {
            // sup sign * (T e_c)'p / w  s.t. p >= 0, W'p = q
            let mut b = ProgramBuilder::new();
            let pv = b.vars("p", r.m());
            if !pv.is_empty() {
                b.add_nonneg("p>=0", pv.iter().map(|&v| v.into()).collect());
            }
            let rows: Vec<LinExpr> = (0..r.n2())
                .map(|n| {
                    let mut e = LinExpr::constant(-r.q[n]);
                    for (row, &v) in pv.iter().enumerate() {
                        e.add_term(v, r.w[(row, n)]);
                    }
                    e
                })
                .collect();
            b.add_zero("W'p=q", rows);
            let mut obj = LinExpr::zero();
            for (row, &v) in pv.iter().enumerate() {
                obj.add_term(v, -sign * t[(row, c)] / w);
            }
            b.minimize(obj);
            let res = solve(&b.build(), &SolveSettings::tight())?;
            match res.status {
                SolveStatus::Optimal => Ok(-res.primal_objective),
                SolveStatus::DualInfeasible => Err(Error::NotSufficientlyExpensive(format!(
                    "sup of the coordinate {c} multiplier LP is unbounded"
                ))),
                SolveStatus::PrimalInfeasible => Err(Error::NotSufficientlyExpensive(
                    "no p >= 0 satisfies W'p = q, so the recourse problem is unbounded".into(),
                )),
                s => Err(Error::solver(s, res.diagnostics)),
            }
        })
        .collect::<Result<_>>()?;
    let lambda_star = sups.into_iter().fold(0.0, f64::max);
    let sample_values: Vec<f64> = p.samples.par_iter().map(|xi| recourse_value(p, x, xi)).collect::<Result<_>>()?;
    let mean = sample_values.iter().sum::<f64>() / sample_values.len() as f64;
    Ok(FixedEvaluation { value: p.metric.epsilon * lambda_star + mean, lambda_star, sample_values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionMode {
    /// Single response, absolute deviation loss.
    Lad,
    /// Several responses, sum of absolute deviations.
    Multitask,
}

/// Samples `(xi_i, chi_i)` of explanatory variables and responses.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub features: Vec<DVector<f64>>,
    pub responses: Vec<DVector<f64>>,
}

impl RegressionData {
    pub fn new(features: Vec<DVector<f64>>, responses: Vec<DVector<f64>>) -> Result<Self> {
        if features.is_empty() || features.len() != responses.len() {
            return Err(Error::InvalidInput("need the same positive number of feature and response rows".into()));
        }
        let (k, l) = (features[0].len(), responses[0].len());
        if features.iter().any(|f| f.len() != k) || responses.iter().any(|r| r.len() != l) || l == 0 {
            return Err(Error::Dimension("ragged regression data".into()));
        }
        Ok(RegressionData { features, responses })
    }

    pub fn k(&self) -> usize {
        self.features[0].len()
    }

    pub fn responses_dim(&self) -> usize {
        self.responses[0].len()
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Slopes `X` (`L x K`) and intercepts `x` (length `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCoefficients {
    pub slopes: DMatrix<f64>,
    pub intercepts: DVector<f64>,
}

impl RegressionCoefficients {
    /// First-stage vector `(vec_rowmajor(X), x)` used by [`regression_problem`].
    pub fn to_first_stage(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.slopes.transpose().iter().copied().collect();
        v.extend(self.intercepts.iter());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub epsilon: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub mode: RegressionMode,
    /// Whether the responses may be moved by the adversary as well. Without
    /// it the regularizer involves only the slopes.
    pub transport_response: bool,
}

/// Closed-form worst-case regression loss:
/// `eps / min{w+, w-} * max_k ||X_:k||_1 + (1/I) sum_i ||X xi_i + x - chi_i||_1`,
/// where the max also ranges over the response columns (each of 1-norm 1)
/// when responses are transported.
pub fn regression_value(coef: &RegressionCoefficients, data: &RegressionData, cfg: &RegressionConfig) -> Result<f64> {
    let (l, k) = coef.slopes.shape();
    if data.is_empty() {
        return Err(Error::Precondition("regression data is empty".into()));
    }
    if k != data.k() || l != data.responses_dim() || coef.intercepts.len() != l {
        return Err(Error::Dimension("coefficients do not match the regression data".into()));
    }
    if cfg.mode == RegressionMode::Lad && l != 1 {
        return Err(Error::Dimension("LAD regression has a single response".into()));
    }
    if !(cfg.w_plus > 0.0 && cfg.w_minus > 0.0) {
        return Err(Error::Precondition("weighted-max scaling parameters must be positive".into()));
    }
    let mut col_max = (0..k).map(|c| coef.slopes.column(c).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if cfg.transport_response {
        col_max = col_max.max(1.0);
    }
    let loss: f64 = data
        .features
        .iter()
        .zip(&data.responses)
        .map(|(xi, chi)| (&coef.slopes * xi + &coef.intercepts - chi).iter().map(|v| v.abs()).sum::<f64>())
        .sum::<f64>()
        / data.len() as f64;
    Ok(cfg.epsilon * col_max / cfg.w_plus.min(cfg.w_minus) + loss)
}

/// Two-stage encoding of robust regression with the responses transported:
/// the uncertainty is `(xi, chi)`, the first stage is `(vec_rowmajor(X), x)`
/// and `Z = min e'y s.t. y >= X xi + x - chi, y >= chi - x - X xi`.
pub fn regression_problem(data: &RegressionData, cfg: &RegressionConfig) -> Result<TwoStageProblem> {
    if !cfg.transport_response {
        return Err(Error::Precondition(
            "the two-stage encoding transports the responses; set transport_response".into(),
        ));
    }
    let (k, l) = (data.k(), data.responses_dim());
    if cfg.mode == RegressionMode::Lad && l != 1 {
        return Err(Error::Dimension("LAD regression has a single response".into()));
    }
    let kk = k + l;
    let n1 = l * k + l;
    let mut t_base = DMatrix::zeros(2 * l, kk);
    for j in 0..l {
        t_base[(j, k + j)] = -1.0;
        t_base[(l + j, k + j)] = 1.0;
    }
    let mut slopes = vec![DMatrix::zeros(2 * l, kk); n1];
    for j in 0..l {
        for c in 0..k {
            let s = &mut slopes[j * k + c];
            s[(j, c)] = 1.0;
            s[(l + j, c)] = -1.0;
        }
    }
    let mut h_slope = DMatrix::zeros(2 * l, n1);
    for j in 0..l {
        h_slope[(j, l * k + j)] = 1.0;
        h_slope[(l + j, l * k + j)] = -1.0;
    }
    let mut w = DMatrix::zeros(2 * l, l);
    for j in 0..l {
        w[(j, j)] = 1.0;
        w[(l + j, j)] = 1.0;
    }
    let samples = data
        .features
        .iter()
        .zip(&data.responses)
        .map(|(f, r)| DVector::from_iterator(kk, f.iter().chain(r.iter()).copied()))
        .collect();
    Ok(TwoStageProblem {
        c: DVector::zeros(n1),
        first_stage: FirstStageSet::free(n1),
        recourse: RecourseData {
            q_mat: DMatrix::zeros(l, kk),
            q: DVector::from_element(l, 1.0),
            w,
            t: AffineMatrix { base: t_base, slopes },
            h: AffineVector { base: DVector::zeros(2 * l), slope: h_slope },
        },
        support: SupportPolytope::whole_space(kk),
        samples,
        metric: MetricConfig::type1(cfg.epsilon, cfg.w_plus, cfg.w_minus),
    })
}

/// Reads regression samples from CSV: each row holds `k` explanatory values
/// followed by at least one response. A leading non-numeric row is treated as
/// a header.
pub fn load_regression_csv(path: impl AsRef<Path>, k: usize) -> Result<RegressionData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut features = Vec::new();
    let mut responses = Vec::new();
    let mut width = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse { line: line + 1, msg: e.to_string() }),
        };
        if vals.len() <= k {
            return Err(Error::Parse {
                line: line + 1,
                msg: format!("expected {k} explanatory columns and at least one response, got {} columns", vals.len()),
            });
        }
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Parse { line: line + 1, msg: "inconsistent column count".into() });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: line + 1, msg: "non-finite value".into() });
        }
        features.push(DVector::from_column_slice(&vals[..k]));
        responses.push(DVector::from_column_slice(&vals[k..]));
    }
    RegressionData::new(features, responses)
}
