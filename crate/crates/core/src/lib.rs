//! Conic reformulations of two-stage distributionally robust linear programs
//! over Wasserstein balls.
//!
//! The crate is organised around a solver-agnostic conic intermediate form
//! ([`conic::ConicProgram`]) that every reformulation targets:
//!
//! * [`model`] holds the instance data, recourse regularity checks and the
//!   extended recourse parameters used by the copositive path.
//! * [`copos`] assembles the copositive programs for 2-Wasserstein balls with
//!   the PSD-plus-nonnegative inner approximation of the copositive cone.
//! * [`exact_lp`] builds the exact linear program for 1-Wasserstein balls when
//!   uncertainty only enters the recourse constraints.
//! * [`oracles`] contains independent evaluators (scenario LPs, the exact
//!   enumeration SOCP for sum-of-max recourse, a grid evaluator, SAA/CVaR and
//!   decision-rule bounds) used to certify the builders.
//! * [`bench`] runs the gap study and the newsvendor out-of-sample study.

// `!(x > 0.0)` style checks deliberately reject NaN; index loops mirror the
// matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

// Links the system OpenBLAS used by the PSD cone of the backend.
use openblas_src as _;

pub mod bench;
pub mod conic;
pub mod copos;
pub mod error;
pub mod exact_lp;
pub mod model;
pub mod oracles;

pub use error::{Error, Result};

/// Membership tolerance for samples and feasibility checks.
pub const FEAS_TOL: f64 = 1e-9;
/// Margin required for strict inequalities (complete recourse certificates).
pub const STRICT_MARGIN: f64 = 1e-8;
