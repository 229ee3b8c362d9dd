//! `relaxed-portfolio`: precision estimation, Monte-Carlo studies and
//! rolling backtests from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 estimation
//! failure.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use settings::Settings;

const THREADS_ENV: &str = "RELAXED_PORTFOLIO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "relaxed-portfolio", version, about)]
struct Cli {
    /// Worker threads (default: RELAXED_PORTFOLIO_THREADS, then all cores).
    /// Results do not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a precision (nodewise) or covariance matrix from a return CSV.
    Estimate(EstimateArgs),
    /// Run a seeded Monte-Carlo study and write median error tables.
    Simulate(SimulateArgs),
    /// Rolling out-of-sample backtest with transaction costs.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Return panel CSV: header of asset labels, optional `RF` column.
    #[arg(long)]
    input: Option<String>,
    /// Matrix CSV path (default: precision.csv or covariance.csv in the output directory).
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// nodewise, ledoit_wolf, poet or sample.
    #[arg(long)]
    method: Option<String>,
    /// Also write portfolio weights: gmv or markowitz.
    #[arg(long)]
    portfolio: Option<String>,
    /// Markowitz per-period return target.
    #[arg(long)]
    rho1: Option<String>,
    /// daily or monthly; picks the default return target.
    #[arg(long)]
    period: Option<String>,
    /// Replace the nodewise estimate by its eigen-cleaned symmetric part.
    #[arg(long)]
    pd_repair: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Comma list of factor3, random_cov_gaussian, random_cov_t9, sparse_cholesky, toeplitz.
    #[arg(long)]
    dgp: Option<String>,
    /// Comma list of asset counts.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<String>,
    /// Comma list of estimators.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rho1: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// Also write one study file per metric.
    #[arg(long)]
    per_metric: Option<String>,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    method: Option<String>,
    /// gmv or markowitz.
    #[arg(long)]
    portfolio: Option<String>,
    /// In-sample window length.
    #[arg(long)]
    n_in: Option<String>,
    /// Proportional transaction cost in basis points (default 50).
    #[arg(long)]
    cost_bp: Option<String>,
    #[arg(long)]
    rho1: Option<String>,
    #[arg(long)]
    period: Option<String>,
    /// rolling or expanding.
    #[arg(long)]
    window: Option<String>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Simulate(_) => "simulate",
            Command::Backtest(_) => "backtest",
        }
    }

    fn flags(self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::Estimate(a) => vec![
                ("input", a.input),
                ("output", a.output),
                ("output_dir", a.output_dir),
                ("method", a.method),
                ("portfolio", a.portfolio),
                ("rho1", a.rho1),
                ("period", a.period),
                ("pd_repair", a.pd_repair),
            ],
            Command::Simulate(a) => vec![
                ("dgp", a.dgp),
                ("p", a.p),
                ("n", a.n),
                ("reps", a.reps),
                ("seed", a.seed),
                ("method", a.method),
                ("rho1", a.rho1),
                ("output_dir", a.output_dir),
                ("per_metric", a.per_metric),
            ],
            Command::Backtest(a) => vec![
                ("input", a.input),
                ("output_dir", a.output_dir),
                ("method", a.method),
                ("portfolio", a.portfolio),
                ("n_in", a.n_in),
                ("cost_bp", a.cost_bp),
                ("rho1", a.rho1),
                ("period", a.period),
                ("window", a.window),
            ],
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{THREADS_ENV} = {v:?} is not a thread count")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Failure::Usage("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let threads = thread_count(cli.threads)?;
    let file = match &cli.config {
        Some(path) => settings::read_config(path)?,
        None => Default::default(),
    };
    let name = cli.command.name();
    let keys = match &cli.command {
        Command::Estimate(_) => commands::estimate_keys(),
        Command::Simulate(_) => commands::simulate_keys(),
        Command::Backtest(_) => commands::backtest_keys(),
    };
    let settings = Settings::resolve(name, &keys, file, cli.command.flags())?;
    let job = || match settings.command() {
        "estimate" => commands::estimate(&settings),
        "simulate" => commands::simulate(&settings),
        _ => commands::backtest(&settings),
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?
            .install(job),
        None => job(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
