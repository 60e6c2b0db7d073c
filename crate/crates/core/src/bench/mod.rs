//! Synthetic instances, the newsvendor out-of-sample study and the gap study.

mod instances;
mod newsvendor;

pub use instances::{
    psd_sqrt, random_correlation, random_instance, random_summax, sample_lognormal, uniform_samples, LognormalSpec,
};
pub use newsvendor::{
    build_newsvendor_chebyshev, build_newsvendor_wasserstein, cross_validate_chebyshev, cross_validate_epsilon,
    default_epsilon_grid, newsvendor_cost, newsvendor_problem, out_of_sample_cvar, saa_policy, ChebyshevParams,
    NewsvendorConfig, NewsvendorProgram, NewsvendorSolution,
};

mod gap;
mod study;

pub use gap::{run_gap_instance, run_gap_study, write_gap_study, GapCell, GapConfig, GapRecord, GapTable};
pub use study::{
    run_newsvendor_study, run_trial, trial_seed, write_study, PolicyOutcome, StudyOutput, StudyResult, SummaryRow,
};

use crate::{Error, Result};

/// Root seed override.
pub const SEED_ENV: &str = "WASSDRO_SEED";
/// Cap on parallel trials.
pub const THREADS_ENV: &str = "WASSDRO_THREADS";

/// `WASSDRO_SEED` if set, else `seed`.
pub fn seed_from_env(seed: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            v.trim().parse().map_err(|_| Error::InvalidInput(format!("{SEED_ENV}={v:?} is not an unsigned integer")))
        }
        Err(_) => Ok(seed),
    }
}

/// Thread pool with `WASSDRO_THREADS` workers (rayon's default when unset or 0).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{THREADS_ENV}={v:?} is not an unsigned integer")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start thread pool: {e}")))
}

/// Quantile of sorted data with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
