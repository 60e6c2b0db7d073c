#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wassdro::model::{
    AffineMatrix, AffineVector, FirstStageSet, MetricConfig, RecourseData, SupportPolytope, TwoStageProblem,
};
use wassdro::oracles::SumMaxRecourse;

pub fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

/// Singleton support `{1}`, recourse `min (xi - 1) y s.t. xi - 1 <= 0 y`, one
/// sample at 1 and radius 1. The recourse value is 0 but the unregularized
/// copositive program is infeasible.
pub fn infinite_gap_instance() -> TwoStageProblem {
    TwoStageProblem {
        c: DVector::zeros(0),
        first_stage: FirstStageSet::free(0),
        recourse: RecourseData {
            q_mat: m(1, 1, &[1.0]),
            q: v(&[-1.0]),
            w: m(1, 1, &[0.0]),
            t: AffineMatrix::constant(m(1, 1, &[1.0])),
            h: AffineVector::constant(v(&[-1.0])),
        },
        support: SupportPolytope::new(m(2, 1, &[1.0, -1.0]), v(&[1.0, -1.0])).unwrap(),
        samples: vec![v(&[1.0])],
        metric: MetricConfig::type2(1.0),
    }
}

/// Random sum-of-max recourse on the unit box with `n2` terms.
pub fn random_summax<R: Rng>(rng: &mut R, k: usize, n2: usize) -> SumMaxRecourse {
    wassdro::bench::random_summax(rng, k, Some(n2)).unwrap()
}

pub fn uniform_samples<R: Rng>(rng: &mut R, k: usize, n: usize) -> Vec<DVector<f64>> {
    wassdro::bench::uniform_samples(rng, k, n)
}

/// Random instance with `Q = 0`, complete recourse `y+ - y- >= T xi + h`,
/// `y >= 0`, `q > 0`,
/// uncertainty in the constraints only, support `R^K` and a 1-Wasserstein
/// ball. The first stage `x in [0, 1]^n1` enters `h(x)`.
pub fn random_lp_instance<R: Rng>(rng: &mut R, n1: usize, k: usize, m2: usize, samples: usize) -> TwoStageProblem {
    let w = DMatrix::from_fn(3 * m2, 2 * m2, |r, c| match r < m2 {
        true if c == r => 1.0,
        true if c == r + m2 => -1.0,
        false if c == r - m2 => 1.0,
        _ => 0.0,
    });
    let q = DVector::from_fn(2 * m2, |_, _| rng.random_range(0.5..2.0));
    let rows = |m: DMatrix<f64>| m.resize_vertically(3 * m2, 0.0);
    let t = rows(DMatrix::from_fn(m2, k, |_, _| rng.random_range(-1.0..1.0)));
    let h_base = DVector::from_fn(m2, |_, _| rng.random_range(-1.0..1.0)).resize_vertically(3 * m2, 0.0);
    let h_slope = rows(DMatrix::from_fn(m2, n1, |_, _| rng.random_range(-1.0..1.0)));
    let xs = (0..samples).map(|_| DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0))).collect();
    TwoStageProblem {
        c: DVector::from_fn(n1, |_, _| rng.random_range(-0.5..0.5)),
        first_stage: FirstStageSet {
            a: DMatrix::zeros(0, n1),
            b: DVector::zeros(0),
            lower: Some(DVector::zeros(n1)),
            upper: Some(DVector::from_element(n1, 1.0)),
        },
        recourse: RecourseData {
            q_mat: DMatrix::zeros(2 * m2, k),
            q,
            w,
            t: AffineMatrix::constant(t),
            h: AffineVector { base: h_base, slope: h_slope },
        },
        support: SupportPolytope::whole_space(k),
        samples: xs,
        metric: MetricConfig::type1(
            rng.random_range(0.05..0.5),
            rng.random_range(0.5..2.0),
            rng.random_range(0.5..2.0),
        ),
    }
}
