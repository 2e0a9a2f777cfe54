//! Command-line front end: run experiments from JSON configs, expand the
//! figure presets, and evaluate the analytical toolkit.
//!
//! Exit codes: 0 on success, 1 for configuration/usage errors, 2 for runtime
//! failures (I/O, non-convergent bounds, singular parameters).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use decafork::harness::{self, ExperimentConfig, HarnessError};
use decafork::theory::{self, EventHistory, OvershootThresholds, TheoryError, TheoryParams};

const SEED_ENV: &str = "RWRES_SEED";

#[derive(Parser)]
#[command(name = "decafork", version, about = "Self-regulating random-walk simulator and analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON experiment config and write artifacts
    Simulate {
        /// Experiment config file (JSON, snake_case keys)
        #[arg(long)]
        config: PathBuf,
        /// Override the configured number of runs
        #[arg(long)]
        runs: Option<u32>,
        /// Override the configured master seed (falls back to $RWRES_SEED)
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker thread count (results are identical for any value)
        #[arg(long)]
        parallel: Option<usize>,
        /// Reuse one graph instance across runs
        #[arg(long)]
        fixed_graph: bool,
    },
    /// Expand a figure preset and run every variant
    Preset {
        /// One of fig1..fig6
        name: String,
        /// Output directory; each variant writes to a subdirectory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Evaluate an analytical quantity
    Theory {
        #[command(subcommand)]
        op: TheoryOp,
    },
}

/// Model parameters shared by most theory operations.
#[derive(Args)]
struct ParamArgs {
    /// Per-step return rate of the revisit law
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Per-step hitting rate of the first-arrival law
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, default_value_t = 10)]
    z0: u32,
    /// Per-decision fork probability (default 1/z0)
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    #[arg(long)]
    gamma_term: Option<f64>,
    #[arg(long, default_value_t = 100)]
    n: u32,
}

impl ParamArgs {
    fn params(&self) -> TheoryParams {
        TheoryParams {
            lambda_r: self.lambda,
            mu_h: self.mu,
            z0: self.z0,
            fork_prob: self.p.unwrap_or(1.0 / self.z0 as f64),
            gamma: self.gamma,
            gamma_term: self.gamma_term.unwrap_or(f64::INFINITY),
            n: self.n,
        }
    }
}

/// Event-history arguments: comma-separated `time:count` groups.
#[derive(Args)]
struct HistoryArgs {
    #[arg(long, default_value_t = 10)]
    active: u32,
    #[arg(long, default_value_t = 0.0)]
    now: f64,
    /// Termination events, e.g. "100:2,250:1"
    #[arg(long)]
    terminations: Option<String>,
    /// Fork events, same format
    #[arg(long)]
    forks: Option<String>,
}

fn parse_events(s: &str) -> Result<Vec<(f64, u32)>, String> {
    s.split(',')
        .filter(|part| !part.is_empty())
        .map(|part| {
            let (t, c) = part
                .split_once(':')
                .ok_or_else(|| format!("expected time:count, got '{part}'"))?;
            Ok((
                t.trim().parse::<f64>().map_err(|e| format!("bad time '{t}': {e}"))?,
                c.trim().parse::<u32>().map_err(|e| format!("bad count '{c}': {e}"))?,
            ))
        })
        .collect()
}

impl HistoryArgs {
    fn history(&self) -> Result<EventHistory, String> {
        Ok(EventHistory {
            active_count: self.active,
            terminations: self.terminations.as_deref().map(parse_events).transpose()?.unwrap_or_default(),
            forks: self.forks.as_deref().map(parse_events).transpose()?.unwrap_or_default(),
            now: self.now,
        })
    }
}

#[derive(Subcommand)]
enum TheoryOp {
    /// CDF of a sum of m independent U(0,1) variables
    IrwinHall {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        sigma: f64,
    },
    /// CDF of the estimator mass left by k walks that failed `elapsed` ago
    ScaledCdf {
        #[arg(long)]
        k: u32,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        elapsed: f64,
    },
    /// Fork/termination thresholds hitting a target decision rate
    Design {
        #[arg(long)]
        z0: u32,
        #[arg(long)]
        delta: f64,
    },
    /// CDF of a forked walk's survival value
    ForkedCdf {
        #[arg(long)]
        x: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau_f: f64,
        #[arg(long)]
        tau_t: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
    },
    /// Mean of a forked walk's survival value
    ForkedMean {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau_f: f64,
        #[arg(long)]
        tau_t: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
    },
    /// Variance of a forked walk's survival value
    ForkedVar {
        #[arg(long)]
        t: f64,
        #[arg(long)]
        tau_f: f64,
        #[arg(long)]
        tau_t: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        mu: f64,
    },
    /// Expected estimator value for an event history
    ExpectedEstimate {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        history: HistoryArgs,
    },
    /// Estimator variance for an event history
    EstimateVariance {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        history: HistoryArgs,
    },
    /// Concentration bound on the per-decision fork probability
    ForkBound {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        history: HistoryArgs,
    },
    /// Concentration bound on the per-decision termination probability
    TermBound {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        history: HistoryArgs,
    },
    /// Fork probability with i walks known everywhere
    PforkPlus {
        #[arg(long)]
        i: u32,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Steps until k_t failures are compensated with probability 1 - delta
    Reaction {
        #[arg(long)]
        k_t: u32,
        /// Number of forks already assumed to have happened
        #[arg(long, default_value_t = 0)]
        r: u32,
        #[arg(long)]
        z_active: u32,
        #[arg(long)]
        delta: f64,
        /// Split the failure budget over this many single-fork stages
        #[arg(long)]
        chain: Option<u32>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Probability of exceeding z walks within t-total steps
    Growth {
        #[arg(long)]
        z: u32,
        #[arg(long)]
        t_total: f64,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Time horizon below which P(exceed z walks) stays within delta
    GrowthTime {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        z: u32,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Ceiling-recursion approximation of the post-failure overshoot
    OvershootApprox {
        #[arg(long)]
        z_start: u32,
        /// Failure time
        #[arg(long)]
        tau_t: f64,
        #[arg(long)]
        t_first_fork: f64,
        #[arg(long)]
        horizon: u32,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Exact doubling-path expectation of the post-failure overshoot
    OvershootExact {
        #[arg(long)]
        z: u32,
        #[arg(long)]
        t_first_fork: f64,
        #[arg(long)]
        depth: u32,
        /// Geometric threshold growth factor per doubling level
        #[arg(long, default_value_t = 1.5)]
        factor: f64,
        #[command(flatten)]
        params: ParamArgs,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<TheoryError> for CliError {
    fn from(e: TheoryError) -> Self {
        match e {
            // bad inputs are usage errors; everything else happened at runtime
            TheoryError::UnsupportedCount(_)
            | TheoryError::InvalidArgument(_)
            | TheoryError::EmptyActive
            | TheoryError::ThresholdConstraint(_) => CliError::Config(e.to_string()),
            TheoryError::SingularParameters { .. } | TheoryError::NonConvergence(_) => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => CliError::Config(e.to_string()),
            HarnessError::Graph(g) => match g {
                decafork::graph::GraphError::InvalidSpec(_) => CliError::Config(g.to_string()),
                _ => CliError::Runtime(g.to_string()),
            },
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<String> for CliError {
    fn from(s: String) -> Self {
        CliError::Config(s)
    }
}

fn env_seed() -> Option<u64> {
    std::env::var(SEED_ENV).ok().and_then(|v| v.parse().ok())
}

fn run_simulate(
    mut config: ExperimentConfig,
    runs: Option<u32>,
    seed: Option<u64>,
    out: &std::path::Path,
    parallel: Option<usize>,
    fixed_graph: bool,
) -> Result<(), CliError> {
    if let Some(r) = runs {
        config.runs = r;
    }
    if let Some(s) = seed.or_else(env_seed) {
        config.seed = s;
    }
    if fixed_graph {
        config.fixed_graph = true;
    }
    let result = harness::run_experiment(&config, parallel)?;
    harness::write_outputs(&result, &config, out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn print_scalar(x: f64) {
    println!("{x}");
}

fn run_theory(op: TheoryOp) -> Result<(), CliError> {
    match op {
        TheoryOp::IrwinHall { m, sigma } => print_scalar(theory::irwin_hall_cdf(m, sigma)?),
        TheoryOp::ScaledCdf { k, sigma, lambda, elapsed } => {
            print_scalar(theory::scaled_failed_cdf(k, sigma, lambda, elapsed)?)
        }
        TheoryOp::Design { z0, delta } => {
            let (gamma, gamma_term) = theory::design_thresholds(z0, delta)?;
            println!("{}", serde_json::json!({ "gamma": gamma, "gamma_term": gamma_term }));
        }
        TheoryOp::ForkedCdf { x, t, tau_f, tau_t, lambda, mu } => {
            print_scalar(theory::forked_cdf(x, t, tau_f, tau_t, lambda, mu)?)
        }
        TheoryOp::ForkedMean { t, tau_f, tau_t, lambda, mu } => {
            print_scalar(theory::forked_mean(t, tau_f, tau_t, lambda, mu)?)
        }
        TheoryOp::ForkedVar { t, tau_f, tau_t, lambda, mu } => {
            print_scalar(theory::forked_var(t, tau_f, tau_t, lambda, mu)?)
        }
        TheoryOp::ExpectedEstimate { params, history } => {
            print_scalar(theory::expected_estimate(&history.history()?, &params.params())?)
        }
        TheoryOp::EstimateVariance { params, history } => {
            print_scalar(theory::estimate_variance(&history.history()?, &params.params())?)
        }
        TheoryOp::ForkBound { params, history } => {
            let b = theory::fork_prob_bound(&history.history()?, &params.params())?;
            println!("{}", serde_json::to_string(&b).map_err(|e| CliError::Runtime(e.to_string()))?);
        }
        TheoryOp::TermBound { params, history } => {
            let b = theory::term_prob_bound(&history.history()?, &params.params())?;
            println!("{}", serde_json::to_string(&b).map_err(|e| CliError::Runtime(e.to_string()))?);
        }
        TheoryOp::PforkPlus { i, params } => print_scalar(theory::pfork_plus(i, &params.params())?),
        TheoryOp::Reaction { k_t, r, z_active, delta, chain, params } => {
            let p = params.params();
            let steps = match chain {
                Some(r_prime) => theory::reaction_time_chained(k_t, r_prime, z_active, &p, delta, None)?,
                None => theory::reaction_time_bound(k_t, r, z_active, &p, delta, None)?,
            };
            println!("{steps}");
        }
        TheoryOp::Growth { z, t_total, params } => {
            let sched = theory::growth_prob_bound(z, t_total, &params.params())?;
            println!("{}", serde_json::to_string(&sched).map_err(|e| CliError::Runtime(e.to_string()))?);
        }
        TheoryOp::GrowthTime { delta, z, params } => {
            print_scalar(theory::growth_time_bound(delta, z, &params.params())?)
        }
        TheoryOp::OvershootApprox { z_start, tau_t, t_first_fork, horizon, params } => {
            let series =
                theory::overshoot_approx(z_start, tau_t, t_first_fork, horizon, &params.params())?;
            println!("{}", serde_json::to_string(&series).map_err(|e| CliError::Runtime(e.to_string()))?);
        }
        TheoryOp::OvershootExact { z, t_first_fork, depth, factor, params } => {
            let thresholds = OvershootThresholds::Geometric { factor };
            print_scalar(theory::overshoot_exact(z, t_first_fork, depth, &thresholds, &params.params())?)
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, runs, seed, out, parallel, fixed_graph } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let parsed: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("bad config: {e}")))?;
            run_simulate(parsed, runs, seed, &out, parallel, fixed_graph)
        }
        Command::Preset { name, out, runs, seed, parallel } => {
            for (label, config) in harness::preset(&name)? {
                run_simulate(config, runs, seed, &out.join(&label), parallel, false)?;
            }
            Ok(())
        }
        Command::Theory { op } => run_theory(op),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successes; anything else is a usage error
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
