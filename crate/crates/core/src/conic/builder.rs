use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use super::{svec_index, svec_len, Cone, ConicProgram};

/// Handle to a decision variable of a [`ProgramBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// Affine expression `constant + sum coef * var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn term(v: Var, coef: f64) -> Self {
        LinExpr { terms: vec![(v.0, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
        self
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_scaled(&mut self, other: &LinExpr, f: f64) -> &mut Self {
        if f != 0.0 {
            self.terms.extend(other.terms.iter().map(|&(i, c)| (i, c * f)));
            self.constant += other.constant * f;
        }
        self
    }

    pub fn scaled(&self, f: f64) -> LinExpr {
        let mut e = LinExpr::zero();
        e.add_scaled(self, f);
        e
    }

    /// Evaluates the expression at a primal point.
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, c)| c * z[i]).sum::<f64>()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| t.1 == 0.0)
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr::term(v, 1.0)
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl SubAssign<&LinExpr> for LinExpr {
    fn sub_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, -1.0);
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += &rhs.into();
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= &rhs.into();
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, f: f64) -> LinExpr {
        self.scaled(f)
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, f: f64) -> LinExpr {
        LinExpr::term(self, f)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

/// Dense square matrix of affine expressions, used to assemble PSD and
/// copositive blocks entry by entry.
#[derive(Debug, Clone)]
pub struct ExprMatrix {
    side: usize,
    entries: Vec<LinExpr>,
}

impl ExprMatrix {
    pub fn new(side: usize) -> Self {
        ExprMatrix { side, entries: vec![LinExpr::zero(); side * side] }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[i * self.side + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[i * self.side + j]
    }

    /// Adds `f * expr` to entry (i, j) and to (j, i) when off-diagonal.
    pub fn add_sym(&mut self, i: usize, j: usize, expr: &LinExpr, f: f64) {
        self.get_mut(i, j).add_scaled(expr, f);
        if i != j {
            self.get_mut(j, i).add_scaled(expr, f);
        }
    }

    /// Adds `f * other` entrywise.
    pub fn add_matrix(&mut self, other: &ExprMatrix, f: f64) {
        assert_eq!(self.side, other.side, "matrix sides differ");
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.add_scaled(b, f);
        }
    }

    /// `(B + B') / 2`, entry (i, j) for i <= j.
    pub fn symmetric_entry(&self, i: usize, j: usize) -> LinExpr {
        if i == j {
            return self.get(i, i).clone();
        }
        let mut e = self.get(i, j).scaled(0.5);
        e.add_scaled(self.get(j, i), 0.5);
        e
    }

    /// Evaluates to a dense symmetric matrix at a primal point.
    pub fn eval(&self, z: &[f64]) -> nalgebra::DMatrix<f64> {
        let k = self.side;
        nalgebra::DMatrix::from_fn(k, k, |i, j| {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            self.symmetric_entry(a, b).eval(z)
        })
    }
}

/// Incremental assembler for [`ConicProgram`].
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    names: Vec<String>,
    objective: LinExpr,
    rows: Vec<LinExpr>,
    cones: Vec<Cone>,
    labels: Vec<String>,
    warnings: Vec<String>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(&mut self, name: impl Into<String>) -> Var {
        self.names.push(name.into());
        Var(self.names.len() - 1)
    }

    pub fn vars(&mut self, name: &str, n: usize) -> Vec<Var> {
        (0..n).map(|i| self.var(format!("{name}[{i}]"))).collect()
    }

    /// A variable constrained to be nonnegative.
    pub fn nonneg_var(&mut self, name: impl Into<String>) -> Var {
        let name = name.into();
        let v = self.var(name.clone());
        self.add_nonneg(format!("{name}>=0"), vec![v.into()]);
        v
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn minimize(&mut self, objective: LinExpr) {
        self.objective = objective;
    }

    fn push_block(&mut self, cone: Cone, label: String, exprs: Vec<LinExpr>) {
        debug_assert_eq!(cone.dim(), exprs.len());
        if exprs.is_empty() {
            return;
        }
        self.rows.extend(exprs);
        self.cones.push(cone);
        self.labels.push(label);
    }

    /// Each expression equals zero.
    pub fn add_zero(&mut self, label: impl Into<String>, exprs: Vec<LinExpr>) {
        let n = exprs.len();
        self.push_block(Cone::Zero(n), label.into(), exprs);
    }

    /// Each expression is nonnegative.
    pub fn add_nonneg(&mut self, label: impl Into<String>, exprs: Vec<LinExpr>) {
        let n = exprs.len();
        self.push_block(Cone::NonNeg(n), label.into(), exprs);
    }

    /// `exprs[0] >= ||exprs[1..]||_2`.
    pub fn add_soc(&mut self, label: impl Into<String>, exprs: Vec<LinExpr>) {
        let n = exprs.len();
        self.push_block(Cone::SecondOrder(n), label.into(), exprs);
    }

    /// The symmetric part of `m` is positive semidefinite.
    pub fn add_psd(&mut self, label: impl Into<String>, m: &ExprMatrix) {
        let k = m.side();
        let mut exprs = vec![LinExpr::zero(); svec_len(k)];
        for c in 0..k {
            for r in 0..=c {
                let e = m.symmetric_entry(r, c);
                exprs[svec_index(r, c)] = if r == c { e } else { e.scaled(std::f64::consts::SQRT_2) };
            }
        }
        self.push_block(Cone::Psd(k), label.into(), exprs);
    }

    /// Inner approximation of the copositive cone: `m = P + N` with `P` PSD and
    /// `N` entrywise nonnegative. Introduces k(k+1)/2 nonnegative variables.
    /// Returns the handles of `N` in `svec` order.
    ///
    /// A diagonal entry that is identically zero forces the whole row of `P`
    /// to vanish, so that row is tied to `N` by equalities and left out of the
    /// PSD block. Without this the program can be feasible only in the limit,
    /// which interior-point methods misreport as solved.
    pub fn add_c0(&mut self, label: impl Into<String>, m: &ExprMatrix) -> Vec<Var> {
        let label = label.into();
        let k = m.side();
        let mut n_vars = vec![Var(0); svec_len(k)];
        for c in 0..k {
            for r in 0..=c {
                n_vars[svec_index(r, c)] = self.var(format!("{label}.N[{r},{c}]"));
            }
        }
        self.add_nonneg(format!("{label}.N>=0"), n_vars.iter().map(|&v| v.into()).collect());
        let zero_row: Vec<bool> = (0..k)
            .map(|r| {
                let d = m.get(r, r);
                d.is_constant() && d.constant == 0.0
            })
            .collect();
        let mut ties = Vec::new();
        for c in 0..k {
            for r in 0..=c {
                if zero_row[r] || zero_row[c] {
                    ties.push(m.symmetric_entry(r, c) - n_vars[svec_index(r, c)]);
                }
            }
        }
        if !ties.is_empty() {
            self.add_zero(format!("{label}.N=M(zero rows)"), ties);
        }
        let keep: Vec<usize> = (0..k).filter(|&r| !zero_row[r]).collect();
        if keep.is_empty() {
            return n_vars;
        }
        let mut p = ExprMatrix::new(keep.len());
        for (b, &c) in keep.iter().enumerate() {
            for (a, &r) in keep.iter().enumerate().take(b + 1) {
                let mut e = m.symmetric_entry(r, c);
                e.add_term(n_vars[svec_index(r, c)], -1.0);
                *p.get_mut(a, b) = e.clone();
                *p.get_mut(b, a) = e;
            }
        }
        self.add_psd(format!("{label}.P"), &p);
        n_vars
    }

    pub fn build(self) -> ConicProgram {
        let n = self.names.len();
        let mut objective = vec![0.0; n];
        for &(i, c) in &self.objective.terms {
            objective[i] += c;
        }
        let mut a = Vec::new();
        let mut b = Vec::with_capacity(self.rows.len());
        for (r, e) in self.rows.iter().enumerate() {
            b.push(e.constant);
            a.extend(e.terms.iter().map(|&(i, c)| (r, i, -c)));
        }
        ConicProgram::coalesce(&mut a);
        ConicProgram {
            objective,
            objective_offset: self.objective.constant,
            a,
            b,
            cones: self.cones,
            var_names: self.names,
            block_labels: self.labels,
            warnings: self.warnings,
        }
    }
}
