use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::instances::{random_instance, sample_lognormal, LognormalSpec};
use super::newsvendor::{
    build_newsvendor_chebyshev, build_newsvendor_wasserstein, cross_validate_chebyshev, cross_validate_epsilon,
    default_epsilon_grid, out_of_sample_cvar, saa_policy, ChebyshevParams, NewsvendorConfig,
};
use super::{quantile, thread_pool};
use crate::{Error, Result};

/// Evaluation of one policy in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    pub x: Vec<f64>,
    pub in_sample: f64,
    pub out_of_sample: f64,
    /// `(SAA - policy) / |SAA|` on the test set; zero for SAA itself.
    pub improvement: f64,
    /// `(policy - reference) / |reference|` on the test set, if a reference was computed.
    pub optimality_gap: Option<f64>,
    pub seconds: f64,
}

/// One trial of the newsvendor study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub trial: usize,
    pub train_size: usize,
    pub seed: u64,
    /// First 16 hex digits of the SHA-256 of the instance JSON.
    pub digest: String,
    /// `"ok"` or the error that ended the trial.
    pub status: String,
    pub epsilon: Option<f64>,
    pub gamma: Option<(f64, f64)>,
    pub wasserstein: Option<PolicyOutcome>,
    pub chebyshev: Option<PolicyOutcome>,
    pub saa: Option<PolicyOutcome>,
    pub reference_cvar: Option<f64>,
}

impl StudyResult {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Mean and 20%/80% quantiles of one statistic for one training size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub train_size: usize,
    pub policy: String,
    pub statistic: String,
    pub mean: f64,
    pub q20: f64,
    pub q80: f64,
    pub trials: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub results: Vec<StudyResult>,
    pub summary: Vec<SummaryRow>,
}

impl StudyOutput {
    pub fn row(&self, train_size: usize, policy: &str, statistic: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.train_size == train_size && r.policy == policy && r.statistic == statistic)
    }
}

fn digest(spec: &LognormalSpec) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Seed of trial `trial` at training size `train_size`.
pub fn trial_seed(seed: u64, train_size: usize, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64).wrapping_add((train_size as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn outcome(
    x: Vec<f64>,
    in_sample: f64,
    test: &[DVector<f64>],
    cfg: &NewsvendorConfig,
    start: Instant,
) -> Result<PolicyOutcome> {
    let oos = out_of_sample_cvar(&x, test, cfg.rho, &cfg.holding_costs(), &cfg.stockout_costs())?;
    Ok(PolicyOutcome {
        x,
        in_sample,
        out_of_sample: oos,
        improvement: 0.0,
        optimality_gap: None,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs one trial. Random draws happen in a fixed order: instance, training
/// set, test set, reference set, then the cross-validation shuffles.
pub fn run_trial(cfg: &NewsvendorConfig, train_size: usize, trial: usize) -> StudyResult {
    let seed = trial_seed(cfg.seed, train_size, trial);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_instance(&mut rng, cfg.k);
    let mut res = StudyResult {
        trial,
        train_size,
        seed,
        digest: digest(&spec),
        status: "ok".into(),
        epsilon: None,
        gamma: None,
        wasserstein: None,
        chebyshev: None,
        saa: None,
        reference_cvar: None,
    };
    if let Err(e) = fill_trial(cfg, train_size, &spec, &mut rng, &mut res) {
        res.status = e.to_string();
    }
    res
}

fn fill_trial(
    cfg: &NewsvendorConfig,
    n: usize,
    spec: &LognormalSpec,
    rng: &mut ChaCha8Rng,
    res: &mut StudyResult,
) -> Result<()> {
    let train = sample_lognormal(spec, n, rng)?;
    let test = sample_lognormal(spec, cfg.test_samples, rng)?;
    let reference = sample_lognormal(spec, cfg.reference_samples, rng)?;

    let start = Instant::now();
    let saa = saa_policy(cfg, &train)?;
    let saa = outcome(saa.x, saa.objective, &test, cfg, start)?;

    let start = Instant::now();
    let grid = cfg.epsilon_grid.clone().unwrap_or_else(|| default_epsilon_grid(n));
    let eps = cross_validate_epsilon(cfg, &train, &grid, rng)?;
    let ws = build_newsvendor_wasserstein(cfg, &train, eps)?.solve()?;
    let mut ws = outcome(ws.x, ws.objective, &test, cfg, start)?;
    res.epsilon = Some(eps);

    let mut cheb = None;
    if !cfg.skip_chebyshev {
        let start = Instant::now();
        let gamma = cross_validate_chebyshev(cfg, &train, rng)?;
        let params = ChebyshevParams::from_samples(&train, gamma.0, gamma.1)?;
        let sol = build_newsvendor_chebyshev(cfg, &params)?.solve()?;
        cheb = Some(outcome(sol.x, sol.objective, &test, cfg, start)?);
        res.gamma = Some(gamma);
    }

    let reference_cvar = if cfg.reference_samples > 0 {
        let r = saa_policy(cfg, &reference)?;
        Some(out_of_sample_cvar(&r.x, &test, cfg.rho, &cfg.holding_costs(), &cfg.stockout_costs())?)
    } else {
        None
    };
    let base = saa.out_of_sample;
    let finish = |o: &mut PolicyOutcome| {
        o.improvement = (base - o.out_of_sample) / base.abs();
        o.optimality_gap = reference_cvar.map(|r| (o.out_of_sample - r) / r.abs());
    };
    finish(&mut ws);
    if let Some(c) = cheb.as_mut() {
        finish(c);
    }
    let mut saa = saa;
    finish(&mut saa);
    let outcomes = [Some(&ws), cheb.as_ref(), Some(&saa)];
    if outcomes.iter().flatten().any(|o| {
        !(o.in_sample.is_finite() && o.out_of_sample.is_finite() && o.improvement.is_finite())
            || o.optimality_gap.is_some_and(|g| !g.is_finite())
    }) {
        return Err(Error::Precondition("non-finite policy statistics".into()));
    }
    res.wasserstein = Some(ws);
    res.chebyshev = cheb;
    res.saa = Some(saa);
    res.reference_cvar = reference_cvar;
    Ok(())
}

type PolicyPick = fn(&StudyResult) -> Option<&PolicyOutcome>;
type StatPick = fn(&PolicyOutcome) -> Option<f64>;

fn summarize(cfg: &NewsvendorConfig, results: &[StudyResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    let policies: [(&str, PolicyPick); 3] = [
        ("wasserstein", |r| r.wasserstein.as_ref()),
        ("chebyshev", |r| r.chebyshev.as_ref()),
        ("saa", |r| r.saa.as_ref()),
    ];
    let stats: [(&str, StatPick); 3] = [
        ("improvement", |o| Some(o.improvement)),
        ("optimality_gap", |o| o.optimality_gap),
        ("out_of_sample_cvar", |o| Some(o.out_of_sample)),
    ];
    for &n in &cfg.train_sizes {
        let cell: Vec<&StudyResult> = results.iter().filter(|r| r.train_size == n).collect();
        let failed = cell.iter().filter(|r| !r.ok()).count();
        for (name, pick) in policies {
            for (stat, value) in stats {
                let mut v: Vec<f64> =
                    cell.iter().filter(|r| r.ok()).filter_map(|r| pick(r)).filter_map(value).collect();
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                rows.push(SummaryRow {
                    train_size: n,
                    policy: name.into(),
                    statistic: stat.into(),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    q20: quantile(&v, 0.2),
                    q80: quantile(&v, 0.8),
                    trials: v.len(),
                    failed,
                });
            }
        }
    }
    rows
}

/// Runs every (training size, trial) pair in parallel; results are sorted by
/// training size and trial id.
pub fn run_newsvendor_study(cfg: &NewsvendorConfig) -> Result<StudyOutput> {
    cfg.check()?;
    let jobs: Vec<(usize, usize)> =
        cfg.train_sizes.iter().flat_map(|&n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let mut results: Vec<StudyResult> =
        thread_pool()?.install(|| jobs.par_iter().map(|&(n, t)| run_trial(cfg, n, t)).collect());
    results.sort_by_key(|r| (r.train_size, r.trial));
    for r in results.iter().filter(|r| !r.ok()) {
        log::warn!("trial {} (I = {}) failed: {}", r.trial, r.train_size, r.status);
    }
    let summary = summarize(cfg, &results);
    Ok(StudyOutput { results, summary })
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

/// Writes `newsvendor_trials.csv`, `newsvendor_summary.csv`, one
/// `<policy>_<statistic>.dat` file per summary series, and wall-clock times
/// to `newsvendor_timings.json` (kept out of the CSV files so that they are
/// reproducible byte for byte).
pub fn write_study(out: &StudyOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("newsvendor_trials.csv"))?;
    let mut header = vec!["trial", "train_size", "seed", "digest", "status", "epsilon", "gamma1", "gamma2"];
    let mut cols = Vec::new();
    for p in ["wasserstein", "chebyshev", "saa"] {
        for s in ["in_sample", "out_of_sample_cvar", "improvement", "optimality_gap", "x"] {
            cols.push(format!("{p}_{s}"));
        }
    }
    header.extend(cols.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in &out.results {
        let mut rec = vec![
            r.trial.to_string(),
            r.train_size.to_string(),
            r.seed.to_string(),
            r.digest.clone(),
            r.status.clone(),
            fmt(r.epsilon),
            fmt(r.gamma.map(|g| g.0)),
            fmt(r.gamma.map(|g| g.1)),
        ];
        for o in [&r.wasserstein, &r.chebyshev, &r.saa] {
            rec.push(fmt(o.as_ref().map(|o| o.in_sample)));
            rec.push(fmt(o.as_ref().map(|o| o.out_of_sample)));
            rec.push(fmt(o.as_ref().map(|o| o.improvement)));
            rec.push(fmt(o.as_ref().and_then(|o| o.optimality_gap)));
            rec.push(
                o.as_ref()
                    .map(|o| o.x.iter().map(|v| format!("{v:.9e}")).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("newsvendor_summary.csv"))?;
    for row in &out.summary {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut series: Vec<(&str, &str)> = out.summary.iter().map(|r| (r.policy.as_str(), r.statistic.as_str())).collect();
    series.sort();
    series.dedup();
    for (policy, stat) in series {
        let mut text = String::from("# train_size mean q20 q80\n");
        for r in out.summary.iter().filter(|r| r.policy == policy && r.statistic == stat) {
            text.push_str(&format!("{} {:.9e} {:.9e} {:.9e}\n", r.train_size, r.mean, r.q20, r.q80));
        }
        fs::write(dir.join(format!("{policy}_{stat}.dat")), text)?;
    }

    let timings: Vec<serde_json::Value> = out
        .results
        .iter()
        .map(|r| {
            serde_json::json!({
                "trial": r.trial,
                "train_size": r.train_size,
                "wasserstein": r.wasserstein.as_ref().map(|o| o.seconds),
                "chebyshev": r.chebyshev.as_ref().map(|o| o.seconds),
                "saa": r.saa.as_ref().map(|o| o.seconds),
            })
        })
        .collect();
    fs::write(dir.join("newsvendor_timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NewsvendorConfig {
        NewsvendorConfig {
            k: 2,
            train_sizes: vec![6],
            trials: 2,
            test_samples: 200,
            reference_samples: 300,
            cv_folds: 3,
            epsilon_grid: Some(vec![0.01, 0.1]),
            gamma1_grid: vec![0.0],
            gamma2_grid: vec![1.0],
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_trials() {
        let cfg = tiny();
        let a = run_trial(&cfg, 6, 0);
        let b = run_trial(&cfg, 6, 0);
        assert!(a.ok(), "{}", a.status);
        let strip = |mut r: StudyResult| {
            for o in [&mut r.wasserstein, &mut r.chebyshev, &mut r.saa].into_iter().flatten() {
                o.seconds = 0.0;
            }
            r
        };
        assert_eq!(strip(a), strip(b));
    }

    #[test]
    fn saa_improvement_is_zero() {
        let out = run_newsvendor_study(&tiny()).unwrap();
        assert_eq!(out.results.len(), 2);
        for r in &out.results {
            assert_eq!(r.saa.as_ref().unwrap().improvement, 0.0);
            assert!(r.reference_cvar.is_some());
        }
        assert_eq!(out.row(6, "saa", "improvement").unwrap().mean, 0.0);
    }
}
