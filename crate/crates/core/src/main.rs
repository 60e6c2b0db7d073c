use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use wassdro::bench::{
    run_gap_study, run_newsvendor_study, seed_from_env, write_gap_study, write_study, GapConfig, NewsvendorConfig,
};
use wassdro::conic::{export, ExportFormat, SolveSettings};
use wassdro::copos::{build_full_problem, build_wce_upper, delta_refinement, robust_mode};
use wassdro::exact_lp::{evaluate_fixed_x, solve_lp};
use wassdro::model::{load_problem, validate, TwoStageProblem};
use wassdro::oracles::{exact_wce_summax, grid_wce, saa_cvar, GridOptions, SumMaxRecourse};
use wassdro::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wassdro",
    version,
    about = "Two-stage distributionally robust linear programs over Wasserstein balls"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and print the findings as JSON.
    Validate { instance: PathBuf },
    /// Solve the copositive reformulation of an instance.
    Solve(SolveArgs),
    /// Solve the exact linear program for a 1-Wasserstein instance.
    SolveLp {
        instance: PathBuf,
        /// Evaluate a fixed first-stage decision instead of optimizing.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
    },
    /// Independent reference evaluations.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Optimality gaps of the copositive and decision-rule bounds on random sum-of-max instances.
    GapStudy(GapArgs),
    /// Out-of-sample newsvendor study.
    Newsvendor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "newsvendor_out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Regularization of the copositive blocks.
    #[arg(long, default_value_t = 0.0, conflicts_with = "delta_schedule")]
    delta: f64,
    /// Comma-separated decreasing schedule, e.g. `0.1,0.01,0`.
    #[arg(long, value_delimiter = ',')]
    delta_schedule: Option<Vec<f64>>,
    /// Relative change that ends the schedule.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Cone used for the copositive blocks; only `c0` is available.
    #[arg(long, default_value = "c0")]
    cone: String,
    /// Bound the worst-case cost of a fixed first-stage decision.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "delta_schedule")]
    x: Option<Vec<f64>>,
    /// Replace the samples by the centre of the support (robust optimization).
    #[arg(long)]
    robust: bool,
    /// Write the conic program instead of solving it.
    #[arg(long, value_name = "cbf|sdpa", conflicts_with = "delta_schedule")]
    export: Option<ExportFormat>,
    /// Destination of the export; defaults to stdout.
    #[arg(long, requires = "export")]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exact SOCP for a sum-of-max recourse on a box.
    Socp { input: PathBuf },
    /// Grid lower bound at a fixed first-stage decision.
    Grid {
        instance: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, default_value_t = 101)]
        per_dim: usize,
    },
    /// Sample-average CVaR of the recourse cost.
    Saa {
        instance: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
    },
}

#[derive(Args)]
struct GapArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
    i: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed number of max terms instead of a random one.
    #[arg(long)]
    n2: Option<usize>,
    /// Allow cells beyond the desk-scale caps (K <= 4, I <= 20, 20 trials).
    #[arg(long)]
    full: bool,
    #[arg(long, default_value = "gap_out")]
    out: PathBuf,
}

/// Input of `oracle socp`.
#[derive(Serialize, Deserialize)]
struct SumMaxInput {
    recourse: SumMaxRecourse,
    samples: Vec<Vec<f64>>,
    epsilon: f64,
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn first_stage(p: &TwoStageProblem, x: Option<Vec<f64>>) -> Result<Vec<f64>> {
    let x = x.unwrap_or_default();
    if x.len() != p.n1() {
        return Err(Error::Dimension(format!(
            "--x has {} entries, the instance has {} first-stage variables",
            x.len(),
            p.n1()
        )));
    }
    Ok(x)
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    if args.cone != "c0" {
        return Err(Error::InvalidInput(format!("unknown cone {:?}; only c0 is available", args.cone)));
    }
    let mut p = load_problem(&args.instance)?;
    if args.robust {
        p = robust_mode(&p)?;
    }
    if let Some(schedule) = args.delta_schedule {
        let r = delta_refinement(&p, &schedule, args.tol)?;
        print_json(&r)?;
        return Ok(ExitCode::SUCCESS);
    }
    let prog = match args.x {
        Some(x) => build_wce_upper(&p, &first_stage(&p, Some(x))?, args.delta)?,
        None => build_full_problem(&p, args.delta)?,
    };
    if let Some(format) = args.export {
        let text = export(&prog.program, format)?;
        match args.output {
            Some(path) => fs::write(path, text)?,
            None => std::io::stdout().lock().write_all(text.as_bytes())?,
        }
        return Ok(ExitCode::SUCCESS);
    }
    let sol = prog.solve(&SolveSettings::psd())?;
    print_json(&sol)?;
    Ok(if sol.is_optimal() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn oracle(cmd: OracleCommand) -> Result<()> {
    match cmd {
        OracleCommand::Socp { input } => {
            let inp: SumMaxInput = serde_json::from_str(&fs::read_to_string(input)?)?;
            let samples: Vec<DVector<f64>> = inp.samples.into_iter().map(DVector::from_vec).collect();
            print_json(&exact_wce_summax(&inp.recourse, &samples, inp.epsilon)?)
        }
        OracleCommand::Grid { instance, x, per_dim } => {
            let p = load_problem(instance)?;
            let x = first_stage(&p, x)?;
            print_json(&grid_wce(&p, &x, &GridOptions { per_dim, ..Default::default() })?)
        }
        OracleCommand::Saa { instance, rho, x } => {
            let p = load_problem(instance)?;
            let x = match x {
                Some(x) => Some(first_stage(&p, Some(x))?),
                None => None,
            };
            print_json(&saa_cvar(&p, rho, x.as_deref())?)
        }
    }
}

fn gap_study(args: GapArgs) -> Result<()> {
    let cfg = GapConfig {
        k_list: args.k,
        i_list: args.i,
        trials: args.trials,
        seed: seed_from_env(args.seed)?,
        n2: args.n2,
        reduced: !args.full,
    };
    let table = run_gap_study(&cfg)?;
    write_gap_study(&table, &args.out)?;
    print_json(&table.cells)
}

fn newsvendor(config: &Path, out: &Path) -> Result<()> {
    let mut cfg: NewsvendorConfig = serde_json::from_str(&fs::read_to_string(config)?)?;
    cfg.seed = seed_from_env(cfg.seed)?;
    let res = run_newsvendor_study(&cfg)?;
    write_study(&res, out)?;
    let failed = res.results.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} trials failed and are excluded from the summary", res.results.len());
    }
    print_json(&res.summary)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { instance } => {
            let rep = validate(&load_problem(instance)?);
            print_json(&rep)?;
            Ok(if rep.is_ok() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Solve(args) => solve(args),
        Command::SolveLp { instance, x } => {
            let p = load_problem(instance)?;
            match x {
                Some(x) => print_json(&evaluate_fixed_x(&p, &first_stage(&p, Some(x))?)?)?,
                None => print_json(&solve_lp(&p)?)?,
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle(cmd) => oracle(cmd).map(|_| ExitCode::SUCCESS),
        Command::GapStudy(args) => gap_study(args).map(|_| ExitCode::SUCCESS),
        Command::Newsvendor { config, out } => newsvendor(&config, &out).map(|_| ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
