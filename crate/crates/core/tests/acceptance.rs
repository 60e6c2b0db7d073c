//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line
//! with the measured quantities before asserting.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{infinite_gap_instance, random_lp_instance, random_summax, uniform_samples};
use wassdro::bench::{run_gap_study, run_newsvendor_study, GapConfig, NewsvendorConfig};
use wassdro::conic::{SolveSettings, SolveStatus};
use wassdro::copos::{build_full_problem, solve_full_problem, solve_wce_upper};
use wassdro::exact_lp::{
    evaluate_fixed_x, regression_problem, regression_value, solve_lp, RegressionCoefficients, RegressionConfig,
    RegressionData, RegressionMode,
};
use wassdro::oracles::{
    decision_rule_bound, exact_wce_summax, grid_wce_with, recourse_dual_value, recourse_primal, GridOptions, RuleDegree,
};

fn verdict(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

#[test]
fn infinite_gap_regression() {
    let start = Instant::now();
    let p = infinite_gap_instance();
    // The optimal values are 0, so the solves run at tight tolerances and
    // monotonicity is checked up to an absolute 1e-6.
    let settings = SolveSettings { reduced_tol: Some(1e-7), ..Default::default() };
    let exact = build_full_problem(&p, 0.0).unwrap().solve(&settings).unwrap();
    let values: Vec<(f64, SolveStatus, f64)> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&d| {
            let s = build_full_problem(&p, d).unwrap().solve(&settings).unwrap();
            (d, s.status, s.objective)
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let monotone = values.windows(2).all(|w| w[1].2 >= w[0].2 - 1e-6);
    let all_optimal = values.iter().all(|v| v.1 == SolveStatus::Optimal);
    let last = values.last().unwrap().2;
    let ok =
        exact.status == SolveStatus::PrimalInfeasible && all_optimal && monotone && last.abs() <= 1e-2 && secs < 1.0;
    verdict(
        "infinite-gap regression",
        ok,
        format!("delta=0 -> {:?}; positive deltas -> {values:?}; {secs:.3}s", exact.status),
    );
}

#[test]
fn small_dimension_exactness() {
    let start = Instant::now();
    let mut worst: (f64, String) = (0.0, String::new());
    let mut failures = Vec::new();
    for j in 0..20u64 {
        let (k, n2, i) = ([1, 2][j as usize % 2], [1, 2][(j as usize / 2) % 2], [5, 10][(j as usize / 4) % 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + j);
        let r = random_summax(&mut rng, k, n2);
        let samples = uniform_samples(&mut rng, k, i);
        let eps = 1.0 / (i as f64).sqrt();
        let exact = exact_wce_summax(&r, &samples, eps).unwrap().value;
        let c0 = solve_wce_upper(&r.to_problem(&samples, eps), &[], 0.0).unwrap();
        assert!(c0.is_optimal(), "instance {j}: {:?}", c0.status);
        let g = rel(c0.objective, exact);
        let tag = format!("instance {j} (K={k}, N2={n2}, I={i}): exact {exact:.6e}, C0 {:.6e}", c0.objective);
        if g > worst.0 {
            worst = (g, tag.clone());
        }
        if g > 5e-3 {
            failures.push(tag);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "exactness at small dimension",
        failures.is_empty() && secs < 120.0,
        format!(
            "worst relative gap {:.3e} at {}; {} of 20 above 0.5%: {failures:?}; {secs:.1}s",
            worst.0,
            worst.1,
            failures.len()
        ),
    );
}

#[test]
fn reduced_gap_table_pattern() {
    let start = Instant::now();
    let cfg = GapConfig { k_list: vec![4], i_list: vec![5, 10, 20], trials: 10, seed: 0, n2: None, reduced: true };
    let t = run_gap_study(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut ok = secs < 900.0;
    let mut cells = Vec::new();
    for c in &t.cells {
        ok &= c.copositive_solvable == 100.0
            && c.copositive_mean_gap <= 1.0
            && c.decision_rule_mean_gap >= c.copositive_mean_gap;
        cells.push(format!("I={}: C0 {:.3}% DR {:.3}%", c.i, c.copositive_mean_gap, c.decision_rule_mean_gap));
    }
    // The approximation bounds every instance from above.
    let below = t.records.iter().filter_map(|r| Some(r.exact? - r.copositive?)).fold(f64::NEG_INFINITY, f64::max);
    ok &= below <= 1e-6;
    let worst = t
        .records
        .iter()
        .filter_map(|r| Some((r.copositive_gap?, r)))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(g, r)| {
            format!("largest instance gap {g:.2}% at I={} trial {} (exact {:.3e})", r.i, r.trial, r.exact.unwrap())
        })
        .unwrap_or_default();
    verdict(
        "reduced gap-table pattern at K=4",
        ok,
        format!("{}; {worst}; max(exact - C0) {below:.1e}; {secs:.1}s", cells.join(", ")),
    );
}

#[test]
fn lp_reformulation_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_lp: f64 = 0.0;
    for _ in 0..20 {
        let p = random_lp_instance(&mut rng, 2, 2, 3, 5);
        let lp = solve_lp(&p).unwrap();
        assert_eq!(lp.status, SolveStatus::Optimal);
        let fixed = evaluate_fixed_x(&p, &lp.x).unwrap();
        let cx: f64 = p.c.iter().zip(&lp.x).map(|(c, x)| c * x).sum();
        worst_lp = worst_lp.max(rel(cx + fixed.value, lp.objective));
    }

    let features: Vec<DVector<f64>> = (0..8).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))).collect();
    let responses: Vec<DVector<f64>> =
        (0..8).map(|_| DVector::from_fn(1, |_, _| rng.random_range(-2.0..2.0))).collect();
    let data = RegressionData::new(features, responses).unwrap();
    let mut worst_lad: f64 = 0.0;
    for _ in 0..50 {
        let cfg = RegressionConfig {
            epsilon: rng.random_range(0.01..1.0),
            w_plus: rng.random_range(0.5..2.0),
            w_minus: rng.random_range(0.5..2.0),
            mode: RegressionMode::Lad,
            transport_response: true,
        };
        let coef = RegressionCoefficients {
            slopes: nalgebra::DMatrix::from_fn(1, 3, |_, _| rng.random_range(-2.0..2.0)),
            intercepts: DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0)),
        };
        let closed = regression_value(&coef, &data, &cfg).unwrap();
        let p = regression_problem(&data, &cfg).unwrap();
        let lp = evaluate_fixed_x(&p, &coef.to_first_stage()).unwrap().value;
        worst_lad = worst_lad.max(rel(lp, closed));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "LP reformulation exactness",
        worst_lp <= 1e-6 && worst_lad <= 1e-8 && secs < 60.0,
        format!("fixed-x vs LP worst relative error {worst_lp:.2e}; LAD closed form worst {worst_lad:.2e}; {secs:.1}s"),
    );
}

#[test]
fn oracle_sandwich_suite() {
    let start = Instant::now();
    let mut problems = Vec::new();

    // grid <= exact <= decision rule on K <= 2.
    let mut worst_low: f64 = f64::NEG_INFINITY;
    let mut worst_high: f64 = f64::NEG_INFINITY;
    for j in 0..8u64 {
        let (k, n2) = ([1, 2][j as usize % 2], [1, 2][(j as usize / 2) % 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + j);
        let r = random_summax(&mut rng, k, n2);
        let samples = uniform_samples(&mut rng, k, 5);
        let eps = 1.0 / 5f64.sqrt();
        let p = r.to_problem(&samples, eps);
        let exact = exact_wce_summax(&r, &samples, eps).unwrap().value;
        let opts =
            GridOptions { per_dim: if k == 1 { 2001 } else { 101 }, refine_estimate: false, ..Default::default() };
        let grid =
            grid_wce_with(|xi| Ok(r.eval(xi.as_slice())), &p.support, &p.samples, &p.metric, &opts).unwrap().value;
        let dr = decision_rule_bound(&p, &[], RuleDegree::Quadratic).unwrap().value;
        worst_low = worst_low.max(grid - exact);
        worst_high = worst_high.max(exact - dr);
    }
    if worst_low > 1e-6 || worst_high > 1e-6 {
        problems.push("sandwich");
    }

    // Recourse strong duality.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_dual: f64 = 0.0;
    for _ in 0..50 {
        let p = random_lp_instance(&mut rng, 2, 3, 3, 1);
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
        let xi = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let primal = recourse_primal(&p, &x, &xi).unwrap().value;
        let dual = recourse_dual_value(&p, &x, &xi).unwrap();
        worst_dual = worst_dual.max((primal - dual).abs() / primal.abs().max(1.0));
    }
    if worst_dual > 1e-7 {
        problems.push("duality");
    }

    // Monotonicity in the radius and in the regularization.
    let mut eps_viol: f64 = f64::NEG_INFINITY;
    let mut delta_viol: f64 = f64::NEG_INFINITY;
    for j in 0..50u64 {
        let (k, n2) = ([1, 2][j as usize % 2], [1, 2][(j as usize / 2) % 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + j);
        let r = random_summax(&mut rng, k, n2);
        let samples = uniform_samples(&mut rng, k, 5);
        let eps = rng.random_range(0.05..0.5);
        let values: Vec<f64> = [eps, 2.0 * eps]
            .iter()
            .map(|&e| solve_full_problem(&r.to_problem(&samples, e), 0.0).unwrap().objective)
            .collect();
        eps_viol = eps_viol.max(values[0] - values[1]);
        let exact: Vec<f64> =
            [eps, 2.0 * eps].iter().map(|&e| exact_wce_summax(&r, &samples, e).unwrap().value).collect();
        eps_viol = eps_viol.max(exact[0] - exact[1]);

        let p = r.to_problem(&samples, eps);
        let by_delta: Vec<f64> = [0.0, 1e-3, 1e-1]
            .iter()
            .map(|&d| {
                let s = solve_full_problem(&p, d).unwrap();
                assert!(s.is_optimal(), "instance {j}, delta {d}: {:?}", s.status);
                s.objective
            })
            .collect();
        delta_viol = delta_viol.max(by_delta[1] - by_delta[0]).max(by_delta[2] - by_delta[1]);
    }
    if eps_viol > 1e-6 || delta_viol > 1e-6 {
        problems.push("monotonicity");
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 300.0 {
        problems.push("runtime");
    }
    verdict(
        "oracle sandwich suite",
        problems.is_empty(),
        format!(
            "max(grid - exact) {worst_low:.2e}, max(exact - DR) {worst_high:.2e}, primal/dual {worst_dual:.2e}, \
             epsilon violation {eps_viol:.2e}, delta violation {delta_viol:.2e}; {secs:.1}s; failed: {problems:?}"
        ),
    );
}

#[test]
fn newsvendor_improvement_sign() {
    let start = Instant::now();
    let cfg: NewsvendorConfig = serde_json::from_value(serde_json::json!({
        "k": 3,
        "train_sizes": [10],
        "trials": 20,
        "test_samples": 5000,
        "reference_samples": 0,
        "seed": 0,
        "skip_chebyshev": true,
    }))
    .unwrap();
    let out = run_newsvendor_study(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let row = out.row(10, "wasserstein", "improvement").expect("summary row");
    let ok = row.failed == 0 && row.mean > 0.0 && row.q20 > -0.10 && secs < 1200.0;
    verdict(
        "newsvendor improvement over SAA",
        ok,
        format!(
            "mean {:.2}%, 20% quantile {:.2}%, 80% quantile {:.2}%, {} trials, {} failed; {secs:.1}s",
            100.0 * row.mean,
            100.0 * row.q20,
            100.0 * row.q80,
            row.trials,
            row.failed
        ),
    );
}

fn run_cli(args: &[&str], threads: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_wassdro"))
        .args(args)
        .env("WASSDRO_THREADS", threads)
        .env_remove("WASSDRO_SEED")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "dat"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn study_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("nv.json");
    std::fs::write(
        &cfg,
        r#"{"k": 2, "train_sizes": [5, 8], "trials": 3, "test_samples": 500, "reference_samples": 500, "seed": 11,
            "epsilon_grid": [0.01, 0.1], "gamma1_grid": [0, 1], "gamma2_grid": [1, 2]}"#,
    )
    .unwrap();
    let mut mismatches = Vec::new();
    let mut compared = 0;
    for (name, args) in [
        ("gap", vec!["gap-study", "--k", "1,2", "--i", "5", "--trials", "3", "--seed", "4"]),
        ("newsvendor", vec!["newsvendor", "--config", cfg.to_str().unwrap()]),
    ] {
        let runs: Vec<_> = ["1", "3"]
            .iter()
            .map(|threads| {
                let dir = tmp.path().join(format!("{name}-{threads}"));
                let mut a = args.clone();
                a.extend(["--out", dir.to_str().unwrap()]);
                run_cli(&a, threads);
                csv_files(&dir)
            })
            .collect();
        assert!(!runs[0].is_empty());
        compared += runs[0].len();
        if runs[0] != runs[1] {
            mismatches.push(name);
        }
    }
    verdict(
        "study determinism",
        mismatches.is_empty(),
        format!("{compared} artifacts compared across reruns with 1 and 3 threads; differing studies: {mismatches:?}"),
    );
}
