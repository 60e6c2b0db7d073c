mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_summax, uniform_samples};
use wassdro::conic::SolveSettings;
use wassdro::copos::{build_risk_averse, robust_mode, solve_full_problem, solve_wce_upper, DisutilitySpec};
use wassdro::oracles::{exact_wce_summax, saa_cvar};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn c0_bounds_the_exact_value(seed in any::<u64>(), k in 1usize..4, n2 in 1usize..3, eps in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_summax(&mut rng, k, n2);
        let samples = uniform_samples(&mut rng, k, 3);
        let exact = exact_wce_summax(&r, &samples, eps).unwrap().value;
        let c0 = solve_wce_upper(&r.to_problem(&samples, eps), &[], 0.0).unwrap();
        prop_assert!(c0.is_optimal());
        prop_assert!(c0.objective >= exact - 1e-6, "C0 {} below exact {}", c0.objective, exact);
    }

    #[test]
    fn identity_disutility_is_risk_neutral(seed in any::<u64>(), k in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_summax(&mut rng, k, 1);
        let p = r.to_problem(&uniform_samples(&mut rng, k, 3), 0.3);
        let neutral = solve_full_problem(&p, 0.0).unwrap().objective;
        let averse = build_risk_averse(&p, &DisutilitySpec::identity(), None, 0.0)
            .unwrap()
            .solve(&SolveSettings::psd())
            .unwrap()
            .objective;
        // The programs differ by a linear change of variables, so only solver
        // accuracy separates them. The optimal faces are unbounded and the
        // objective is reliable to about 1e-5 absolute.
        prop_assert!((neutral - averse).abs() <= 5e-5 + 1e-3 * neutral.abs(), "{} vs {}", neutral, averse);
    }
}

#[test]
fn cvar_at_small_radius_approaches_saa() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = random_summax(&mut rng, 2, 2);
    let p = r.to_problem(&uniform_samples(&mut rng, 2, 6), 1e-4);
    for rho in [0.25, 0.5, 1.0] {
        let u = DisutilitySpec::cvar(rho).unwrap();
        let c0 = build_risk_averse(&p, &u, None, 0.0).unwrap().solve(&SolveSettings::psd()).unwrap();
        let saa = saa_cvar(&p, rho, None).unwrap().cvar;
        assert!(c0.is_optimal());
        // The ball contains the empirical distribution and shrinks onto it.
        assert!(c0.objective >= saa - 1e-6 && c0.objective <= saa + 1e-2, "rho {rho}: {} vs {saa}", c0.objective);
    }
}

#[test]
fn robust_mode_covers_the_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 1..=2 {
        let r = random_summax(&mut rng, k, 2);
        let p = r.to_problem(&uniform_samples(&mut rng, k, 4), 0.1);
        let robust = robust_mode(&p).unwrap();
        assert_eq!(robust.samples.len(), 1);
        let v = solve_full_problem(&robust, 0.0).unwrap();
        assert!(v.is_optimal());
        // Every vertex of the unit box lies in the ball, and the recourse is convex.
        let worst = (0..1usize << k)
            .map(|m| r.eval(&(0..k).map(|j| ((m >> j) & 1) as f64).collect::<Vec<_>>()))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(v.objective >= worst - 1e-6, "K={k}: {} < {worst}", v.objective);
        assert!(v.objective >= solve_full_problem(&p, 0.0).unwrap().objective - 1e-6);
    }
}
