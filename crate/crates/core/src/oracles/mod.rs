//! Independent evaluators used to certify the conic builders.

mod cvar;
mod grid;
mod recourse;
mod rules;
mod summax;

pub use cvar::{empirical_cvar, saa_cvar, saa_cvar_costs, SaaCvarSolution};
pub use grid::{grid_wce, grid_wce_with, GridOptions, GridResult};
pub use recourse::{recourse_dual_value, recourse_primal, recourse_value, RecourseSolution, DUALITY_TOL};
pub use rules::{decision_rule_bound, DecisionRuleBound, RuleDegree};
pub use summax::{exact_wce_summax, Piece, SocpRecord, SocpSolution, SumMaxRecourse, MAX_COMBINATIONS};

use serde::{Deserialize, Serialize};

/// How an oracle value was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub grid_per_dim: Option<usize>,
    pub tolerance: f64,
}
