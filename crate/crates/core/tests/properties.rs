mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_lp_instance;
use wassdro::conic::{
    export, import, smat, svec, svec_len, Cone, ConicProgram, ExportFormat, ExprMatrix, LinExpr, ProgramBuilder,
};
use wassdro::exact_lp::dual_norm;
use wassdro::oracles::{empirical_cvar, recourse_dual_value, recourse_primal};

fn symmetric(k: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    let mut it = vals.iter().cycle();
    for c in 0..k {
        for r in 0..=c {
            let v = *it.next().unwrap();
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    m
}

/// A program with one block of each cone kind, in the order the CBF reader
/// restores them.
fn random_program(seed: u64, n: usize, psd_side: usize) -> ConicProgram {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ProgramBuilder::new();
    let z = b.vars("z", n);
    let expr = |rng: &mut ChaCha8Rng| {
        let mut e = LinExpr::constant(rng.random_range(-2.0..2.0));
        for &v in &z {
            if rng.random_bool(0.6) {
                e.add_term(v, rng.random_range(-3.0..3.0));
            }
        }
        e
    };
    b.add_zero("eq", (0..2).map(|_| expr(&mut rng)).collect());
    b.add_nonneg("ineq", (0..3).map(|_| expr(&mut rng)).collect());
    b.add_soc("soc", (0..3).map(|_| expr(&mut rng)).collect());
    let mut m = ExprMatrix::new(psd_side);
    for c in 0..psd_side {
        for r in 0..=c {
            m.add_sym(r, c, &expr(&mut rng), 1.0);
        }
    }
    b.add_psd("psd", &m);
    let obj = expr(&mut rng);
    b.minimize(obj);
    b.build()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svec_round_trip(k in 1usize..7, vals in prop::collection::vec(-10.0f64..10.0, 1..28)) {
        let m = symmetric(k, &vals);
        let v = svec(&m).unwrap();
        prop_assert_eq!(v.len(), svec_len(k));
        let back = smat(&v).unwrap();
        prop_assert!((back - &m).abs().max() < 1e-12);
    }

    #[test]
    fn svec_preserves_trace_inner_product(k in 1usize..6, a in prop::collection::vec(-5.0f64..5.0, 21), b in prop::collection::vec(-5.0f64..5.0, 21)) {
        let (ma, mb) = (symmetric(k, &a), symmetric(k, &b));
        let dot: f64 = svec(&ma).unwrap().iter().zip(svec(&mb).unwrap()).map(|(x, y)| x * y).sum();
        prop_assert!((dot - (&ma * &mb).trace()).abs() < 1e-9 * (1.0 + dot.abs()));
    }

    #[test]
    fn cbf_round_trip(seed in any::<u64>(), n in 1usize..5, side in 1usize..4) {
        let prog = random_program(seed, n, side);
        let back = import(&export(&prog, ExportFormat::Cbf).unwrap(), ExportFormat::Cbf).unwrap();
        prop_assert_eq!(&back.cones, &prog.cones);
        prop_assert_eq!(&back.objective, &prog.objective);
        prop_assert_eq!(back.objective_offset, prog.objective_offset);
        prop_assert_eq!(back.b.len(), prog.b.len());
        for (x, y) in back.b.iter().zip(&prog.b) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + y.abs()));
        }
        prop_assert_eq!(back.a.len(), prog.a.len());
        for (x, y) in back.a.iter().zip(&prog.a) {
            prop_assert_eq!((x.0, x.1), (y.0, y.1));
            prop_assert!((x.2 - y.2).abs() <= 1e-14 * (1.0 + y.2.abs()));
        }
    }

    #[test]
    fn dual_norm_holder(z in prop::collection::vec(-5.0f64..5.0, 1..6), d in prop::collection::vec(-1.0f64..1.0, 6), wp in 0.1f64..3.0, wm in 0.1f64..3.0) {
        // Pairing with the transport cost sum_k (w_plus d_k^+ + w_minus d_k^-).
        let d = &d[..z.len()];
        let cost: f64 = d.iter().map(|&v| if v > 0.0 { wp * v } else { -wm * v }).sum();
        let pairing: f64 = z.iter().zip(d).map(|(a, b)| a * b).sum();
        let dn = dual_norm(&z, wp, wm);
        prop_assert!(pairing <= dn * cost + 1e-12);
        // Attained by moving one coordinate.
        let k = (0..z.len()).max_by(|&i, &j| {
            let f = |v: f64| (v / wp).max(-v / wm);
            f(z[i]).total_cmp(&f(z[j]))
        }).unwrap();
        let step = if z[k] / wp >= -z[k] / wm { 1.0 / wp } else { -1.0 / wm };
        prop_assert!((z[k] * step - dn).abs() < 1e-12 || dn == 0.0);
    }

    #[test]
    fn cvar_is_monotone_in_level(costs in prop::collection::vec(-10.0f64..10.0, 1..40), r1 in 0.01f64..1.0, r2 in 0.01f64..1.0) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let a = empirical_cvar(&costs, lo).unwrap();
        let b = empirical_cvar(&costs, hi).unwrap();
        prop_assert!(a >= b - 1e-12);
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        let max = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(b >= mean - 1e-12 && a <= max + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recourse_strong_duality(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_lp_instance(&mut rng, 2, 2, 3, 1);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let xi = nalgebra::DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
        let primal = recourse_primal(&p, &x, &xi).unwrap().value;
        let dual = recourse_dual_value(&p, &x, &xi).unwrap();
        prop_assert!((primal - dual).abs() <= 1e-7 * primal.abs().max(1.0), "{} vs {}", primal, dual);
    }
}

#[test]
fn psd_cone_dimension() {
    assert_eq!(Cone::Psd(4).dim(), 10);
}
