//! Solver-agnostic conic intermediate representation.
//!
//! Every builder in the crate targets one canonical form:
//!
//! ```text
//! minimize    c'z + offset
//! subject to  A z + s = b,   s in K = K_1 x ... x K_p
//! ```
//!
//! where each `K_j` is a zero cone, a nonnegative orthant, a second-order
//! cone or a PSD cone stored in scaled `svec` form (see [`svec`]).

mod builder;
mod export;
mod solve;
mod svec;

pub use builder::{ExprMatrix, LinExpr, ProgramBuilder, Var};
pub use export::{export, import, ExportFormat};
pub use solve::{solve, SolveResult, SolveSettings, SolveStatus};
pub use svec::{smat, svec, svec_index, svec_len};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One block of the cone product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    /// `s[0] >= ||s[1..]||_2`.
    SecondOrder(usize),
    /// PSD matrices of the given side, stored as `svec` of length k(k+1)/2.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(n) | Cone::NonNeg(n) | Cone::SecondOrder(n) => n,
            Cone::Psd(k) => svec_len(k),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Cone::Zero(_) => "zero",
            Cone::NonNeg(_) => "nonneg",
            Cone::SecondOrder(_) => "soc",
            Cone::Psd(_) => "psd",
        }
    }
}

impl std::fmt::Display for Cone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cone::Psd(k) => write!(f, "psd({k})"),
            c => write!(f, "{}({})", c.tag(), c.dim()),
        }
    }
}

/// A cone program in canonical form with a coalesced sparse constraint matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub objective: Vec<f64>,
    pub objective_offset: f64,
    /// Triplets `(row, col, value)`, sorted by `(row, col)` with no duplicates.
    pub a: Vec<(usize, usize, f64)>,
    pub b: Vec<f64>,
    pub cones: Vec<Cone>,
    pub var_names: Vec<String>,
    /// Provenance label per cone block, e.g. `copositive[i=3]`.
    pub block_labels: Vec<String>,
    pub warnings: Vec<String>,
}

impl ConicProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    /// Row ranges of each cone block.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.cones
            .iter()
            .map(|c| {
                let r = start..start + c.dim();
                start += c.dim();
                r
            })
            .collect()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.num_vars();
        let m: usize = self.cones.iter().map(Cone::dim).sum();
        if m != self.b.len() {
            return Err(Error::Dimension(format!("cone dimensions sum to {m} but program has {} rows", self.b.len())));
        }
        if self.var_names.len() != n {
            return Err(Error::Dimension("variable name table length".into()));
        }
        if self.block_labels.len() != self.cones.len() {
            return Err(Error::Dimension("block label table length".into()));
        }
        for (idx, c) in self.cones.iter().enumerate() {
            if c.dim() == 0 {
                return Err(Error::InvalidInput(format!("cone block {idx} is empty")));
            }
        }
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in &self.a {
            if r >= m || c >= n {
                return Err(Error::Dimension(format!("entry ({r},{c}) out of range")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({r},{c})")));
            }
            if let Some(p) = prev {
                if p >= (r, c) {
                    return Err(Error::InvalidInput("constraint triplets not sorted/coalesced".into()));
                }
            }
            prev = Some((r, c));
        }
        if self.objective.iter().chain(&self.b).any(|v| !v.is_finite()) || !self.objective_offset.is_finite() {
            return Err(Error::InvalidInput("non-finite objective or right-hand side".into()));
        }
        Ok(())
    }

    /// Evaluates `c'z + offset`.
    pub fn objective_value(&self, z: &[f64]) -> f64 {
        self.objective_offset + self.objective.iter().zip(z).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Computes the slack `b - A z`.
    pub fn slack(&self, z: &[f64]) -> Vec<f64> {
        let mut s = self.b.clone();
        for &(r, c, v) in &self.a {
            s[r] -= v * z[c];
        }
        s
    }

    /// Canonicalizes triplets: sorts by (row, col) and sums duplicates.
    pub(crate) fn coalesce(triplets: &mut Vec<(usize, usize, f64)>) {
        triplets.sort_by_key(|x| (x.0, x.1));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets.iter() {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|t| t.2 != 0.0);
        *triplets = out;
    }
}
