use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::recourse::recourse_primal;
use super::Provenance;
use crate::model::{MetricConfig, SupportPolytope, TwoStageProblem};
use crate::{Error, Result, FEAS_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Points per coordinate of the bounding box, endpoints included.
    pub per_dim: usize,
    /// Relative bracket width at which the lambda search stops.
    pub lambda_tol: f64,
    /// Also evaluate a coarser grid to estimate the discretization error.
    pub refine_estimate: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { per_dim: 101, lambda_tol: 1e-10, refine_estimate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Lower bound on the worst-case expectation, exact in the grid limit.
    pub value: f64,
    pub lambda: f64,
    /// Number of support points evaluated (grid points in the support plus samples).
    pub points: usize,
    /// Value on a grid with about half the resolution, if requested.
    pub coarse_value: Option<f64>,
    /// `|value - coarse_value|`.
    pub refinement: Option<f64>,
    pub provenance: Provenance,
}

fn grid_points(lo: &[f64], hi: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let k = lo.len();
    let total = per_dim.pow(k as u32);
    (0..total)
        .map(|mut idx| {
            (0..k)
                .map(|c| {
                    let j = idx % per_dim;
                    idx /= per_dim;
                    if per_dim == 1 {
                        lo[c]
                    } else {
                        lo[c] + (hi[c] - lo[c]) * j as f64 / (per_dim - 1) as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// `eps^r lambda + (1/I) sum_i max_g [Z(g) - lambda d(g, xi_i)^r]` minimized
/// over `lambda >= 0` with `Z` tabulated on `points`.
fn minimize_dual(
    values: &[f64],
    points: &[Vec<f64>],
    samples: &[DVector<f64>],
    metric: &MetricConfig,
    tol: f64,
) -> (f64, f64) {
    let r = metric.order as i32;
    let eps_r = metric.epsilon.powi(r);
    if values.contains(&f64::INFINITY) {
        return (f64::INFINITY, f64::NAN);
    }
    let dist: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| points.iter().map(|g| metric.norm.distance(g, s.as_slice()).powi(r)).collect())
        .collect();
    let f = |lambda: f64| -> f64 {
        let inner: f64 = dist
            .iter()
            .map(|d| values.iter().zip(d).map(|(z, d)| z - lambda * d).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        eps_r * lambda + inner / samples.len() as f64
    };
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (f64::NEG_INFINITY, 0.0);
    }
    let zmax = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let zmin = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = (zmax - zmin) / eps_r + 1.0;

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol * (1.0 + hi) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    let mut best = (fc, c);
    for lam in [0.0, a, b, d, hi] {
        let v = f(lam);
        if v < best.0 {
            best = (v, lam);
        }
    }
    best
}

fn evaluate<F>(
    z: &F,
    support: &SupportPolytope,
    samples: &[DVector<f64>],
    metric: &MetricConfig,
    per_dim: usize,
    tol: f64,
) -> Result<(f64, f64, usize)>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    let (lo, hi) = match support.as_box() {
        Some(b) => b,
        None => support.bounding_box()?.ok_or(Error::UnboundedSupport)?,
    };
    let mut points: Vec<Vec<f64>> = grid_points(&lo, &hi, per_dim)
        .into_iter()
        .filter(|g| support.contains(&DVector::from_column_slice(g), FEAS_TOL))
        .collect();
    // Samples are included so the empirical distribution stays representable.
    points.extend(samples.iter().map(|s| s.as_slice().to_vec()));
    let values: Vec<f64> = points.par_iter().map(|g| z(&DVector::from_column_slice(g))).collect::<Result<_>>()?;
    let (v, l) = minimize_dual(&values, &points, samples, metric, tol);
    Ok((v, l, points.len()))
}

/// Grid evaluation of the dual formula for an arbitrary recourse function.
pub fn grid_wce_with<F>(
    z: F,
    support: &SupportPolytope,
    samples: &[DVector<f64>],
    metric: &MetricConfig,
    opts: &GridOptions,
) -> Result<GridResult>
where
    F: Fn(&DVector<f64>) -> Result<f64> + Sync,
{
    let k = support.dim();
    if k > 3 {
        return Err(Error::Precondition(format!("grid evaluation supports K <= 3, got {k}")));
    }
    if !(metric.order == 1 || metric.order == 2) {
        return Err(Error::Precondition("Wasserstein order must be 1 or 2".into()));
    }
    if !(metric.epsilon > 0.0) {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    if opts.per_dim < 2 {
        return Err(Error::Precondition("at least two grid points per coordinate".into()));
    }
    if samples.is_empty() {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    let (value, lambda, points) = evaluate(&z, support, samples, metric, opts.per_dim, opts.lambda_tol)?;
    let coarse_value = if opts.refine_estimate {
        let coarse = (opts.per_dim / 2 + 1).max(2);
        Some(evaluate(&z, support, samples, metric, coarse, opts.lambda_tol)?.0)
    } else {
        None
    };
    Ok(GridResult {
        value,
        lambda,
        points,
        coarse_value,
        refinement: coarse_value.map(|c| (value - c).abs()),
        provenance: Provenance {
            method: "grid over the support bounding box, golden-section search in lambda".into(),
            grid_per_dim: Some(opts.per_dim),
            tolerance: opts.lambda_tol,
        },
    })
}

/// Lower bound on the worst-case expected recourse cost at `x`, obtained by
/// restricting the inner supremum to a grid over the support.
pub fn grid_wce(p: &TwoStageProblem, x: &[f64], opts: &GridOptions) -> Result<GridResult> {
    p.check_dimensions()?;
    let z = |xi: &DVector<f64>| recourse_primal(p, x, xi).map(|s| s.value);
    grid_wce_with(z, &p.support, &p.samples, &p.metric, opts)
}
