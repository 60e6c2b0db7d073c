use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instances::{random_summax, uniform_samples};
use super::thread_pool;
use crate::copos::solve_wce_upper;
use crate::oracles::{decision_rule_bound, exact_wce_summax, RuleDegree};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub k_list: Vec<usize>,
    pub i_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Number of max terms; drawn per instance when `None`.
    pub n2: Option<usize>,
    /// Desk-scale mode: drops `K > 4` and `I > 20` and caps trials at 20.
    pub reduced: bool,
}

impl GapConfig {
    /// The configuration actually run: the reduced caps applied.
    pub fn effective(&self) -> GapConfig {
        let mut c = self.clone();
        if c.reduced {
            let (k0, i0) = (c.k_list.len(), c.i_list.len());
            c.k_list.retain(|&k| k <= 4);
            c.i_list.retain(|&i| i <= 20);
            if c.k_list.len() < k0 || c.i_list.len() < i0 || c.trials > 20 {
                log::warn!("reduced mode drops K > 4, I > 20 and caps trials at 20");
            }
            c.trials = c.trials.min(20);
        }
        c
    }

    fn check(&self) -> Result<()> {
        if self.k_list.is_empty() || self.i_list.is_empty() || self.trials == 0 {
            return Err(Error::Precondition("gap study needs at least one K, one I and one trial".into()));
        }
        if self.k_list.contains(&0) || self.i_list.contains(&0) {
            return Err(Error::Precondition("K and I must be positive".into()));
        }
        Ok(())
    }
}

/// One instance of the gap study. Gaps are in percent of the exact value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub k: usize,
    pub i: usize,
    pub trial: usize,
    pub seed: u64,
    pub n2: usize,
    pub exact: Option<f64>,
    pub copositive: Option<f64>,
    pub decision_rule: Option<f64>,
    pub copositive_gap: Option<f64>,
    pub decision_rule_gap: Option<f64>,
    pub status: String,
    #[serde(skip)]
    pub times: [f64; 3],
}

/// Averages over the solvable instances of one `(K, I)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCell {
    pub k: usize,
    pub i: usize,
    pub trials: usize,
    pub copositive_mean_gap: f64,
    pub decision_rule_mean_gap: f64,
    /// Percentage of instances where the exact and copositive solves succeeded.
    pub copositive_solvable: f64,
    pub decision_rule_solvable: f64,
    #[serde(skip)]
    pub mean_times: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub records: Vec<GapRecord>,
    pub cells: Vec<GapCell>,
}

impl GapTable {
    pub fn cell(&self, k: usize, i: usize) -> Option<&GapCell> {
        self.cells.iter().find(|c| c.k == k && c.i == i)
    }
}

fn gap(approx: f64, exact: f64) -> f64 {
    (approx - exact) / exact.abs() * 100.0
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

/// One random sum-of-max instance on `[0, 1]^K` with `I` uniform samples and
/// radius `1/sqrt(I)`, evaluated by the exact SOCP, the copositive bound and
/// the quadratic decision rule.
pub fn run_gap_instance(k: usize, i: usize, trial: usize, seed: u64, n2: Option<usize>) -> GapRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = GapRecord {
        k,
        i,
        trial,
        seed,
        n2: 0,
        exact: None,
        copositive: None,
        decision_rule: None,
        copositive_gap: None,
        decision_rule_gap: None,
        status: "ok".into(),
        times: [0.0; 3],
    };
    let r = match random_summax(&mut rng, k, n2) {
        Ok(r) => r,
        Err(e) => {
            rec.status = e.to_string();
            return rec;
        }
    };
    rec.n2 = r.n2();
    let samples = uniform_samples(&mut rng, k, i);
    let eps = 1.0 / (i as f64).sqrt();
    let p = r.to_problem(&samples, eps);

    let mut errors = Vec::new();
    let (exact, t0) = timed(|| exact_wce_summax(&r, &samples, eps).map(|s| s.value));
    let (c0, t1) = timed(|| {
        let s = solve_wce_upper(&p, &[], 0.0)?;
        if s.is_optimal() {
            Ok(s.objective)
        } else {
            Err(Error::solver(s.status, "copositive bound not solved"))
        }
    });
    let (dr, t2) = timed(|| decision_rule_bound(&p, &[], RuleDegree::Quadratic).map(|b| b.value));
    rec.times = [t0, t1, t2];
    for (name, res, slot) in [
        ("exact", exact, &mut rec.exact),
        ("copositive", c0, &mut rec.copositive),
        ("decision rule", dr, &mut rec.decision_rule),
    ] {
        match res {
            Ok(v) => *slot = Some(v),
            Err(e) => errors.push(format!("{name}: {e}")),
        }
    }
    if let Some(e) = rec.exact {
        rec.copositive_gap = rec.copositive.map(|v| gap(v, e));
        rec.decision_rule_gap = rec.decision_rule.map(|v| gap(v, e));
    }
    if !errors.is_empty() {
        rec.status = errors.join("; ");
    }
    rec
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Runs every `(K, I, trial)` instance in parallel. Instance seeds are
/// `seed + trial` mixed with the cell, so a cell's instances do not depend
/// on the other cells.
pub fn run_gap_study(cfg: &GapConfig) -> Result<GapTable> {
    let cfg = cfg.effective();
    cfg.check()?;
    let jobs: Vec<(usize, usize, usize)> = cfg
        .k_list
        .iter()
        .flat_map(|&k| cfg.i_list.iter().flat_map(move |&i| (0..cfg.trials).map(move |t| (k, i, t))))
        .collect();
    let mut records: Vec<GapRecord> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(k, i, t)| {
                let seed = cfg.seed.wrapping_add(t as u64).wrapping_add(((k as u64) << 32) ^ ((i as u64) << 16));
                run_gap_instance(k, i, t, seed, cfg.n2)
            })
            .collect()
    });
    records.sort_by_key(|r| (r.k, r.i, r.trial));
    let mut cells = Vec::new();
    for &k in &cfg.k_list {
        for &i in &cfg.i_list {
            let cell: Vec<&GapRecord> = records.iter().filter(|r| r.k == k && r.i == i).collect();
            let c0: Vec<f64> = cell.iter().filter_map(|r| r.copositive_gap).collect();
            let dr: Vec<f64> = cell.iter().filter_map(|r| r.decision_rule_gap).collect();
            let n = cell.len() as f64;
            let times = [0, 1, 2].map(|j| mean(&cell.iter().map(|r| r.times[j]).collect::<Vec<_>>()));
            cells.push(GapCell {
                k,
                i,
                trials: cell.len(),
                copositive_mean_gap: mean(&c0),
                decision_rule_mean_gap: mean(&dr),
                copositive_solvable: 100.0 * c0.len() as f64 / n,
                decision_rule_solvable: 100.0 * dr.len() as f64 / n,
                mean_times: times,
            });
        }
    }
    Ok(GapTable { records, cells })
}

/// Writes `gap_instances.csv` and `gap_table.csv`, and the mean solve times
/// per cell to `gap_timings.json`.
pub fn write_gap_study(t: &GapTable, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("gap_instances.csv"))?;
    for r in &t.records {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("gap_table.csv"))?;
    for c in &t.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    let timings: Vec<serde_json::Value> = t
        .cells
        .iter()
        .map(|c| {
            serde_json::json!({
                "k": c.k,
                "i": c.i,
                "exact_seconds": c.mean_times[0],
                "copositive_seconds": c.mean_times[1],
                "decision_rule_seconds": c.mean_times[2],
            })
        })
        .collect();
    fs::write(dir.join("gap_timings.json"), serde_json::to_string_pretty(&timings)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_cell() {
        let cfg = GapConfig { k_list: vec![1], i_list: vec![5], trials: 3, seed: 5, n2: None, reduced: true };
        let t = run_gap_study(&cfg).unwrap();
        let c = t.cell(1, 5).unwrap();
        assert_eq!((c.trials, c.copositive_solvable), (3, 100.0));
        for r in &t.records {
            // The copositive value bounds the exact value from above.
            assert!(r.copositive_gap.unwrap() >= -1e-4, "{r:?}");
            assert!(r.decision_rule_gap.unwrap() >= -1e-3, "{r:?}");
        }
    }

    #[test]
    fn reduced_caps() {
        let cfg = GapConfig { k_list: vec![2, 8], i_list: vec![5, 40], trials: 50, seed: 0, n2: None, reduced: true };
        let e = cfg.effective();
        assert_eq!((e.k_list, e.i_list, e.trials), (vec![2], vec![5], 20));
    }
}
