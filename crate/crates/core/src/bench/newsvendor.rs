use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::instances::psd_sqrt;
use crate::conic::{solve, ConicProgram, ExprMatrix, LinExpr, ProgramBuilder, SolveSettings, Var};
use crate::model::{
    AffineMatrix, AffineVector, FirstStageSet, MetricConfig, RecourseData, SupportPolytope, TwoStageProblem,
};
use crate::oracles::{empirical_cvar, saa_cvar};
use crate::{Error, Result};

fn default_k() -> usize {
    3
}
fn default_budget() -> f64 {
    30.0
}
fn default_rho() -> f64 {
    0.1
}
fn default_train_sizes() -> Vec<usize> {
    vec![10]
}
fn default_trials() -> usize {
    100
}
fn default_test_samples() -> usize {
    20_000
}
fn default_reference_samples() -> usize {
    20_000
}
fn default_folds() -> usize {
    5
}
fn default_gamma1() -> Vec<f64> {
    vec![0.0, 0.25, 1.0, 4.0]
}
fn default_gamma2() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}

/// Multi-item newsvendor with CVaR objective and the out-of-sample study setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Holding cost per unit; defaults to ones.
    #[serde(default)]
    pub holding: Option<Vec<f64>>,
    /// Stock-out cost per unit; defaults to tens.
    #[serde(default)]
    pub stockout: Option<Vec<f64>>,
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_train_sizes")]
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_test_samples")]
    pub test_samples: usize,
    /// Sample size of the SAA reference policy; 0 skips optimality gaps.
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    /// Radius grid; `None` uses [`default_epsilon_grid`].
    #[serde(default)]
    pub epsilon_grid: Option<Vec<f64>>,
    #[serde(default = "default_gamma1")]
    pub gamma1_grid: Vec<f64>,
    #[serde(default = "default_gamma2")]
    pub gamma2_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Skip the Chebyshev policy (it dominates the runtime of small studies).
    #[serde(default)]
    pub skip_chebyshev: bool,
}

impl Default for NewsvendorConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl NewsvendorConfig {
    pub fn holding_costs(&self) -> Vec<f64> {
        self.holding.clone().unwrap_or_else(|| vec![1.0; self.k])
    }

    pub fn stockout_costs(&self) -> Vec<f64> {
        self.stockout.clone().unwrap_or_else(|| vec![10.0; self.k])
    }

    pub fn check(&self) -> Result<()> {
        let (b, s) = (self.holding_costs(), self.stockout_costs());
        if self.k == 0 || b.len() != self.k || s.len() != self.k {
            return Err(Error::Dimension("cost vectors must have length K >= 1".into()));
        }
        if b.iter().chain(&s).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("holding and stock-out costs must be positive".into()));
        }
        if !(self.budget > 0.0 && self.budget.is_finite()) {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidInput("CVaR level must lie in (0, 1]".into()));
        }
        if self.train_sizes.is_empty() || self.train_sizes.iter().any(|&i| i < self.cv_folds.max(1)) {
            return Err(Error::InvalidInput("every training size must be at least the number of folds".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput("cross-validation needs at least two folds".into()));
        }
        if self.test_samples == 0 {
            return Err(Error::InvalidInput("test set must be nonempty".into()));
        }
        if let Some(g) = &self.epsilon_grid {
            if g.is_empty() || g.iter().any(|e| !(*e > 0.0)) {
                return Err(Error::InvalidInput("radius grid must be nonempty and positive".into()));
            }
        }
        if self.gamma1_grid.is_empty()
            || self.gamma2_grid.is_empty()
            || self.gamma1_grid.iter().chain(&self.gamma2_grid).any(|g| !(*g >= 0.0))
        {
            return Err(Error::InvalidInput("confidence grids must be nonempty and nonnegative".into()));
        }
        Ok(())
    }
}

/// Ten logarithmically spaced radii from `1e-3` to `1e1` plus `1/sqrt(I)`, sorted.
pub fn default_epsilon_grid(i: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..9).map(|j| 10f64.powf(-3.0 + 0.5 * j as f64)).collect();
    g.push(1.0 / (i as f64).sqrt());
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Per-sample cost `sum_k max{b_k (x_k - xi_k), s_k (xi_k - x_k)}`.
pub fn newsvendor_cost(x: &[f64], xi: &DVector<f64>, b: &[f64], s: &[f64]) -> f64 {
    (0..x.len()).map(|k| (b[k] * (x[k] - xi[k])).max(s[k] * (xi[k] - x[k]))).sum()
}

/// Empirical CVaR of the newsvendor cost of `x` over `samples`.
pub fn out_of_sample_cvar(x: &[f64], samples: &[DVector<f64>], rho: f64, b: &[f64], s: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Precondition("test set is empty".into()));
    }
    let costs: Vec<f64> = samples.iter().map(|xi| newsvendor_cost(x, xi, b, s)).collect();
    empirical_cvar(&costs, rho)
}

/// The newsvendor as a two-stage instance: `T = [-diag(b); diag(s)]`,
/// `h(x) = [diag(b) x; -diag(s) x]`, `W = [I; I]`, `q = e`, support `R_+^K`,
/// first stage `x >= 0, e'x <= B`.
pub fn newsvendor_problem(cfg: &NewsvendorConfig, samples: &[DVector<f64>], epsilon: f64) -> TwoStageProblem {
    let k = cfg.k;
    let (b, s) = (cfg.holding_costs(), cfg.stockout_costs());
    let mut t = DMatrix::zeros(2 * k, k);
    let mut h_slope = DMatrix::zeros(2 * k, k);
    let mut w = DMatrix::zeros(2 * k, k);
    for j in 0..k {
        t[(j, j)] = -b[j];
        t[(k + j, j)] = s[j];
        h_slope[(j, j)] = b[j];
        h_slope[(k + j, j)] = -s[j];
        w[(j, j)] = 1.0;
        w[(k + j, j)] = 1.0;
    }
    TwoStageProblem {
        c: DVector::zeros(k),
        first_stage: FirstStageSet {
            a: DMatrix::from_element(1, k, 1.0),
            b: DVector::from_element(1, cfg.budget),
            lower: Some(DVector::zeros(k)),
            upper: None,
        },
        recourse: RecourseData {
            q_mat: DMatrix::zeros(k, k),
            q: DVector::from_element(k, 1.0),
            w,
            t: AffineMatrix::constant(t),
            h: AffineVector { base: DVector::zeros(2 * k), slope: h_slope },
        },
        support: SupportPolytope::orthant(k),
        samples: samples.to_vec(),
        metric: MetricConfig::type2(epsilon),
    }
}

/// A newsvendor program with the handle of the order quantities.
#[derive(Debug, Clone)]
pub struct NewsvendorProgram {
    pub program: ConicProgram,
    x: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsvendorSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl NewsvendorProgram {
    pub fn solve(&self) -> Result<NewsvendorSolution> {
        let res = solve(&self.program, &SolveSettings::psd_relaxed())?;
        let objective = res.value()?;
        Ok(NewsvendorSolution { x: self.x.iter().map(|v| res.x[v.0]).collect(), objective })
    }
}

/// Order variables with `x >= 0`, `e'x <= B`.
fn orders(b: &mut ProgramBuilder, cfg: &NewsvendorConfig) -> Vec<Var> {
    let x = b.vars("x", cfg.k);
    b.add_nonneg("x>=0", x.iter().map(|&v| v.into()).collect());
    let mut budget = LinExpr::constant(cfg.budget);
    for &v in &x {
        budget.add_term(v, -1.0);
    }
    b.add_nonneg("e'x<=B", vec![budget]);
    x
}

/// Adds the `K + 2K + 1` block shared by both newsvendor programs: top-left
/// `top_left`, top-right `top_right`, `T = [-diag(b); diag(s)]`,
/// `h(x) = [diag(b) x; -diag(s) x]`, `W = [I; I]`, and bottom-right `corner`.
#[allow(clippy::too_many_arguments)]
fn newsvendor_block(
    b: &mut ProgramBuilder,
    label: String,
    cfg: &NewsvendorConfig,
    x: &[Var],
    top_left: &ExprMatrix,
    top_right: &[LinExpr],
    psi: &[Var],
    phi: &[Var],
    corner: &LinExpr,
) {
    let k = cfg.k;
    let (hb, sc) = (cfg.holding_costs(), cfg.stockout_costs());
    let last = 3 * k;
    let mut m = ExprMatrix::new(last + 1);
    m.add_matrix(&embed(top_left, last + 1), 1.0);
    for a in 0..k {
        m.add_sym(a, last, &top_right[a], 1.0);
        // -T/2: rows j and K + j of T touch coordinate j only.
        m.add_sym(a, k + a, &LinExpr::constant(0.5 * hb[a]), 1.0);
        m.add_sym(a, 2 * k + a, &LinExpr::constant(-0.5 * sc[a]), 1.0);
    }
    // W diag(phi) W' = [[D, D], [D, D]] with D = diag(phi).
    for j in 0..k {
        let e = LinExpr::from(phi[j]);
        m.add_sym(k + j, k + j, &e, 1.0);
        m.add_sym(2 * k + j, 2 * k + j, &e, 1.0);
        m.add_sym(k + j, 2 * k + j, &e, 1.0);
    }
    // (W psi - h(x)) / 2
    for j in 0..k {
        let mut up = LinExpr::term(psi[j], 0.5);
        up.add_term(x[j], -0.5 * hb[j]);
        m.add_sym(k + j, last, &up, 1.0);
        let mut low = LinExpr::term(psi[j], 0.5);
        low.add_term(x[j], 0.5 * sc[j]);
        m.add_sym(2 * k + j, last, &low, 1.0);
    }
    m.add_sym(last, last, corner, 1.0);
    b.add_c0(label, &m);
}

fn embed(m: &ExprMatrix, side: usize) -> ExprMatrix {
    let mut out = ExprMatrix::new(side);
    for i in 0..m.side() {
        for j in 0..m.side() {
            out.get_mut(i, j).add_scaled(m.get(i, j), 1.0);
        }
    }
    out
}

/// Worst-case CVaR newsvendor over a 2-Wasserstein ball:
/// `min theta + (eps^2 lambda + (1/I) sum s_i) / rho` with one copositive
/// block per sample (inner approximation) and `s_i >= 0`.
pub fn build_newsvendor_wasserstein(
    cfg: &NewsvendorConfig,
    samples: &[DVector<f64>],
    epsilon: f64,
) -> Result<NewsvendorProgram> {
    cfg.check()?;
    if !(epsilon > 0.0) {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let k = cfg.k;
    let mut b = ProgramBuilder::new();
    let x = orders(&mut b, cfg);
    let theta = b.var("theta");
    let lambda = b.nonneg_var("lambda");
    let s = b.vars("s", samples.len());
    b.add_nonneg("s>=0", s.iter().map(|&v| v.into()).collect());
    let inv = 1.0 / (cfg.rho * samples.len() as f64);
    let mut obj = LinExpr::from(theta);
    obj.add_term(lambda, epsilon * epsilon / cfg.rho);
    for (i, xi) in samples.iter().enumerate() {
        if xi.len() != k {
            return Err(Error::Dimension(format!("sample {i} has length {}, expected {k}", xi.len())));
        }
        obj.add_term(s[i], inv);
        let psi = b.vars(&format!("psi[{i}]"), k);
        let phi = b.vars(&format!("phi[{i}]"), k);
        let mut tl = ExprMatrix::new(k);
        for a in 0..k {
            tl.add_sym(a, a, &lambda.into(), 1.0);
        }
        let tr: Vec<LinExpr> = (0..k).map(|a| LinExpr::term(lambda, -xi[a])).collect();
        let mut corner = LinExpr::from(s[i]) + theta;
        corner.add_term(lambda, xi.norm_squared());
        for j in 0..k {
            corner.add_term(psi[j], -1.0);
            corner.add_term(phi[j], -1.0);
        }
        newsvendor_block(&mut b, format!("copositive[i={i}]"), cfg, &x, &tl, &tr, &psi, &phi, &corner);
    }
    b.minimize(obj);
    Ok(NewsvendorProgram { program: b.build(), x })
}

/// Moment information of the Chebyshev ambiguity set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevParams {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ChebyshevParams {
    /// Sample mean and (biased) sample covariance.
    pub fn from_samples(samples: &[DVector<f64>], gamma1: f64, gamma2: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Precondition("at least one sample is required".into()));
        }
        let n = samples.len() as f64;
        let k = samples[0].len();
        let mean = samples.iter().fold(DVector::zeros(k), |a, s| a + s) / n;
        let covariance = samples.iter().fold(DMatrix::zeros(k, k), |a, s| {
            let d = s - &mean;
            a + &d * d.transpose()
        }) / n;
        Ok(ChebyshevParams { mean, covariance, gamma1, gamma2 })
    }
}

/// Worst-case CVaR newsvendor over the Chebyshev set, objective
/// `theta + [s + tr((gamma2 S + mu mu') M) + mu'm + sqrt(gamma1) ||S^{1/2}(m + 2 M mu)||] / rho`.
/// A ridge of `1e-8` is added to a singular covariance.
pub fn build_newsvendor_chebyshev(cfg: &NewsvendorConfig, params: &ChebyshevParams) -> Result<NewsvendorProgram> {
    cfg.check()?;
    let k = cfg.k;
    if params.mean.len() != k || params.covariance.shape() != (k, k) {
        return Err(Error::Dimension("moment dimensions differ from K".into()));
    }
    if !(params.gamma1 >= 0.0 && params.gamma2 >= 0.0) {
        return Err(Error::Precondition("confidence parameters must be nonnegative".into()));
    }
    let mut cov = (&params.covariance + params.covariance.transpose()) * 0.5;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("covariance is not finite".into()));
    }
    let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
    if min_eig < 1e-8 {
        if min_eig < -1e-8 {
            return Err(Error::InvalidInput("covariance is not positive semidefinite".into()));
        }
        cov += DMatrix::identity(k, k) * 1e-8;
    }
    let root = psd_sqrt(&cov)?;
    let mu = &params.mean;

    let mut b = ProgramBuilder::new();
    let x = orders(&mut b, cfg);
    let theta = b.var("theta");
    let s = b.var("s");
    let m = b.vars("m", k);
    let psi = b.vars("psi", k);
    let phi = b.vars("phi", k);
    let mut mm = ExprMatrix::new(k);
    let mut mv = vec![vec![Var(0); k]; k];
    for j in 0..k {
        for i in 0..=j {
            let v = b.var(format!("M[{i},{j}]"));
            mv[i][j] = v;
            mv[j][i] = v;
            mm.add_sym(i, j, &v.into(), 1.0);
        }
    }
    b.add_psd("M>=0", &mm);

    let weight = &cov * params.gamma2 + mu * mu.transpose();
    let mut inner = LinExpr::from(s);
    for i in 0..k {
        for j in 0..k {
            inner.add_term(mv[i][j], weight[(i, j)]);
        }
        inner.add_term(m[i], mu[i]);
    }
    if params.gamma1 > 0.0 {
        let t = b.var("t");
        inner.add_term(t, params.gamma1.sqrt());
        // u = m + 2 M mu
        let u: Vec<LinExpr> = (0..k)
            .map(|i| {
                let mut e = LinExpr::from(m[i]);
                for j in 0..k {
                    e.add_term(mv[i][j], 2.0 * mu[j]);
                }
                e
            })
            .collect();
        let mut cone = vec![LinExpr::from(t)];
        for r in 0..k {
            let mut e = LinExpr::zero();
            for (c, uc) in u.iter().enumerate() {
                e.add_scaled(uc, root[(r, c)]);
            }
            cone.push(e);
        }
        b.add_soc("t>=||S^1/2(m+2M mu)||", cone);
    }
    let mut obj = LinExpr::from(theta);
    obj.add_scaled(&inner, 1.0 / cfg.rho);

    let half_m: Vec<LinExpr> = m.iter().map(|&v| LinExpr::term(v, 0.5)).collect();
    let mut corner = LinExpr::from(s) + theta;
    for j in 0..k {
        corner.add_term(psi[j], -1.0);
        corner.add_term(phi[j], -1.0);
    }
    newsvendor_block(&mut b, "copositive[recourse]".into(), cfg, &x, &mm, &half_m, &psi, &phi, &corner);

    let mut second = embed(&mm, k + 1);
    for a in 0..k {
        second.add_sym(a, k, &half_m[a], 1.0);
    }
    second.add_sym(k, k, &s.into(), 1.0);
    b.add_c0("copositive[zero-piece]", &second);

    b.minimize(obj);
    Ok(NewsvendorProgram { program: b.build(), x })
}

/// SAA policy: the empirical CVaR minimizer.
pub fn saa_policy(cfg: &NewsvendorConfig, samples: &[DVector<f64>]) -> Result<NewsvendorSolution> {
    let p = newsvendor_problem(cfg, samples, 0.0);
    let sol = saa_cvar(&p, cfg.rho, None)?;
    Ok(NewsvendorSolution { x: sol.x, objective: sol.objective })
}

/// Contiguous folds of a seeded permutation of `0..n`.
fn folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 || n < k {
        return Err(Error::Precondition(format!("cannot split {n} samples into {k} nonempty folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    Ok((0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

/// Mean out-of-fold CVaR for each candidate; `fit` trains on the in-fold samples.
fn cv_scores<F>(
    cfg: &NewsvendorConfig,
    samples: &[DVector<f64>],
    parts: &[Vec<usize>],
    candidates: usize,
    fit: F,
) -> Result<Vec<f64>>
where
    F: Fn(usize, &[DVector<f64>]) -> Result<Vec<f64>>,
{
    let (hb, sc) = (cfg.holding_costs(), cfg.stockout_costs());
    let mut scores = vec![0.0; candidates];
    for fold in parts {
        let train: Vec<DVector<f64>> =
            (0..samples.len()).filter(|i| !fold.contains(i)).map(|i| samples[i].clone()).collect();
        let test: Vec<DVector<f64>> = fold.iter().map(|&i| samples[i].clone()).collect();
        for (c, score) in scores.iter_mut().enumerate() {
            *score += match fit(c, &train) {
                Ok(x) => out_of_sample_cvar(&x, &test, cfg.rho, &hb, &sc)?,
                Err(Error::Solver { .. }) => f64::INFINITY,
                Err(e) => return Err(e),
            };
        }
    }
    Ok(scores.into_iter().map(|s| s / parts.len() as f64).collect())
}

/// Index of the smallest score; ties go to the candidate ranked first by `order`.
fn argmin_by(scores: &[f64], order: impl Fn(usize, usize) -> std::cmp::Ordering) -> usize {
    let mut best = 0;
    for c in 1..scores.len() {
        let better = scores[c] < scores[best] || (scores[c] == scores[best] && order(c, best).is_lt());
        if better {
            best = c;
        }
    }
    best
}

/// Radius with the lowest mean out-of-fold CVaR; ties go to the smaller radius.
pub fn cross_validate_epsilon<R: Rng + ?Sized>(
    cfg: &NewsvendorConfig,
    samples: &[DVector<f64>],
    grid: &[f64],
    rng: &mut R,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Precondition("radius grid is empty".into()));
    }
    let parts = folds(samples.len(), cfg.cv_folds, rng)?;
    let scores = cv_scores(cfg, samples, &parts, grid.len(), |c, train| {
        Ok(build_newsvendor_wasserstein(cfg, train, grid[c])?.solve()?.x)
    })?;
    Ok(grid[argmin_by(&scores, |a, b| grid[a].total_cmp(&grid[b]))])
}

/// `(gamma1, gamma2)` with the lowest mean out-of-fold CVaR; ties go to the
/// smaller pair in lexicographic order.
pub fn cross_validate_chebyshev<R: Rng + ?Sized>(
    cfg: &NewsvendorConfig,
    samples: &[DVector<f64>],
    rng: &mut R,
) -> Result<(f64, f64)> {
    let pairs: Vec<(f64, f64)> =
        cfg.gamma1_grid.iter().flat_map(|&g1| cfg.gamma2_grid.iter().map(move |&g2| (g1, g2))).collect();
    let parts = folds(samples.len(), cfg.cv_folds, rng)?;
    let scores = cv_scores(cfg, samples, &parts, pairs.len(), |c, train| {
        let params = ChebyshevParams::from_samples(train, pairs[c].0, pairs[c].1)?;
        Ok(build_newsvendor_chebyshev(cfg, &params)?.solve()?.x)
    })?;
    let best = argmin_by(&scores, |a, b| pairs[a].0.total_cmp(&pairs[b].0).then(pairs[a].1.total_cmp(&pairs[b].1)));
    Ok(pairs[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copos::{build_risk_averse, DisutilitySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> NewsvendorConfig {
        NewsvendorConfig { k: 2, budget: 10.0, rho: 0.2, ..Default::default() }
    }

    fn samples() -> Vec<DVector<f64>> {
        [[1.0, 2.0], [2.5, 0.5], [0.7, 1.2], [3.0, 2.2]].iter().map(|v| DVector::from_column_slice(v)).collect()
    }

    #[test]
    fn defaults() {
        let c = NewsvendorConfig::default();
        assert_eq!((c.k, c.budget, c.rho, c.test_samples, c.cv_folds), (3, 30.0, 0.1, 20_000, 5));
        assert_eq!(c.holding_costs(), vec![1.0; 3]);
        assert_eq!(c.stockout_costs(), vec![10.0; 3]);
        c.check().unwrap();
    }

    #[test]
    fn grid_contains_rule_of_thumb() {
        let g = default_epsilon_grid(16);
        assert!(g.contains(&0.25));
        assert_eq!(g.first(), Some(&1e-3));
        assert!((g.last().unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn oos_cvar_examples() {
        // One item, b = s = 1, x = 0: costs equal the demands.
        let d: Vec<DVector<f64>> = (1..=10).map(|v| DVector::from_element(1, v as f64)).collect();
        assert!((out_of_sample_cvar(&[0.0], &d, 0.5, &[1.0], &[1.0]).unwrap() - 8.0).abs() < 1e-12);
        assert!((out_of_sample_cvar(&[0.0], &d, 1.0, &[1.0], &[1.0]).unwrap() - 5.5).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_matches_risk_averse_builder() {
        let cfg = small_cfg();
        let eps = 0.3;
        let direct = build_newsvendor_wasserstein(&cfg, &samples(), eps).unwrap().solve().unwrap();
        let p = newsvendor_problem(&cfg, &samples(), eps);
        let generic = build_risk_averse(&p, &DisutilitySpec::cvar(cfg.rho).unwrap(), None, 0.0)
            .unwrap()
            .solve(&SolveSettings::psd())
            .unwrap();
        let rel = (direct.objective - generic.objective).abs() / direct.objective.abs().max(1.0);
        assert!(rel < 1e-6, "{} vs {}", direct.objective, generic.objective);
    }

    #[test]
    fn chebyshev_dominates_empirical_cvar() {
        // With gamma2 >= 1 the empirical distribution lies in the ambiguity set.
        let cfg = small_cfg();
        let (b, s) = (cfg.holding_costs(), cfg.stockout_costs());
        let mut prev = f64::NEG_INFINITY;
        for g2 in [1.0, 2.0, 4.0] {
            let params = ChebyshevParams::from_samples(&samples(), 0.5, g2).unwrap();
            let sol = build_newsvendor_chebyshev(&cfg, &params).unwrap().solve().unwrap();
            let emp = out_of_sample_cvar(&sol.x, &samples(), cfg.rho, &b, &s).unwrap();
            assert!(sol.objective >= emp - 1e-6, "{} < {emp}", sol.objective);
            assert!(sol.objective >= prev - 1e-6);
            prev = sol.objective;
        }
    }

    #[test]
    fn chebyshev_point_mass_limit() {
        // gamma1 = gamma2 = 0 pins the distribution to the mean; the dual
        // infimum is only approached as M grows, so the value is a small
        // upper bound on the loss at the mean.
        let cfg = small_cfg();
        let params = ChebyshevParams::from_samples(&samples(), 0.0, 0.0).unwrap();
        let sol = build_newsvendor_chebyshev(&cfg, &params).unwrap().solve().unwrap();
        let at_mean = newsvendor_cost(&sol.x, &params.mean, &cfg.holding_costs(), &cfg.stockout_costs());
        assert!(sol.objective >= at_mean - 1e-6 && sol.objective < 0.05, "{} vs {at_mean}", sol.objective);
    }

    #[test]
    fn cv_singleton_and_duplicate_grids() {
        let cfg = NewsvendorConfig { cv_folds: 2, ..small_cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(cross_validate_epsilon(&cfg, &samples(), &[0.1], &mut rng).unwrap(), 0.1);
        assert_eq!(cross_validate_epsilon(&cfg, &samples(), &[0.1, 0.1], &mut rng).unwrap(), 0.1);
        assert!(cross_validate_epsilon(&NewsvendorConfig { cv_folds: 5, ..cfg }, &samples(), &[0.1], &mut rng).is_err());
    }
}
