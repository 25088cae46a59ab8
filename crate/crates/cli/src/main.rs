//! `diattn`: batch driver for missions, the scalar oracle and the ADMM
//! scaling experiment.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 IO error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use diattn::admm::scaling::{scaling_sweep, ScalingSettings};
use diattn::baselines::{
    scalar_oracle, scalar_regime_thresholds, scalar_regime_thresholds_with, scalar_stationary_solution,
    scalar_stationary_solution_with, ScalarSystem, StationaryCoefficient,
};
use diattn::harness::export::{export, export_monte_carlo, CONFIG_FILE};
use diattn::harness::{monte_carlo, run_mission_partial, Method, ScenarioConfig};
use diattn::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "diattn", version, about = "Directed-information attention allocation for LQG path following")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop mission and export its trace.
    Simulate(SimulateArgs),
    /// Closed-form baselines.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Solver scaling experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON; omitted keys take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// ccp-centralized | ccp-admm | greedy | full | none
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo runs with seeds seed, seed+1, ...
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Stationary allocation of a scalar system.
    Scalar {
        #[arg(long, allow_hyphen_values = true)]
        a: f64,
        #[arg(long, allow_hyphen_values = true)]
        w: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        #[arg(long, allow_hyphen_values = true)]
        vhat: f64,
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Per-iteration ADMM time against a centralized solve for H = 5, 10, 20, ... up to `hmax`.
    Admm {
        #[arg(long)]
        hmax: usize,
        /// ADMM iterations timed per horizon.
        #[arg(long, default_value_t = 10)]
        iters: usize,
        /// Time limit for each centralized solve, in seconds.
        #[arg(long, default_value_t = 120.0)]
        limit: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config_error() {
        2
    } else if e.is_solver_failure() {
        3
    } else if e.is_io_error() {
        4
    } else {
        1
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(b) = args.beta {
        cfg.allocation.beta = b;
    }
    if let Some(h) = args.horizon {
        cfg.allocation.horizon = h;
    }
    if let Some(m) = &args.method {
        cfg.allocation.method = m.parse::<Method>()?;
    }
    if let Some(s) = args.seed {
        cfg.rng_seed = s;
    }
    cfg.validate()?;

    match args.runs {
        Some(n) if n != 1 => {
            let summary = monte_carlo(&cfg, n)?;
            let path = export_monte_carlo(&summary, &args.out)?;
            let config = args.out.join(CONFIG_FILE);
            std::fs::write(&config, cfg.to_json() + "\n").map_err(|source| Error::Io { path: config, source })?;
            print_json(&json!({ "mean": summary.mean, "std": summary.std, "file": path }));
            Ok(())
        }
        _ => {
            let (log, failure) = run_mission_partial(&cfg);
            // a failed mission still leaves the steps it completed on disk
            export(&log, &args.out)?;
            match failure {
                Some(e) => Err(e),
                None => {
                    print_json(&json!(log.summary()));
                    Ok(())
                }
            }
        }
    }
}

fn oracle(cmd: &OracleCommand) -> Result<(), Error> {
    let OracleCommand::Scalar { a, w, theta, vhat, beta } = *cmd;
    let sys = ScalarSystem { a, w, theta, vhat, beta };
    let sol = scalar_stationary_solution(&sys)?;
    let printed = scalar_stationary_solution_with(&sys, StationaryCoefficient::Printed)?;
    let (b1, b2) = scalar_regime_thresholds(&sys)?;
    let (pb1, pb2) = scalar_regime_thresholds_with(&sys, StationaryCoefficient::Printed)?;
    print_json(&json!({
        "system": sys,
        "oracle_p": scalar_oracle(&sys)?,
        "closed_form": sol,
        "beta_thresholds": [b1, b2],
        "printed_coefficient": { "closed_form": printed, "beta_thresholds": [pb1, pb2] },
    }));
    Ok(())
}

fn horizons(hmax: usize) -> Vec<usize> {
    let mut hs: Vec<usize> = std::iter::successors(Some(5usize), |h| Some(h * 2)).take_while(|h| *h <= hmax).collect();
    if hs.last() != Some(&hmax) {
        hs.push(hmax);
    }
    hs
}

fn bench(cmd: &BenchCommand) -> Result<(), Error> {
    let BenchCommand::Admm { hmax, iters, limit } = *cmd;
    let settings = ScalingSettings { admm_iterations: iters, centralized_limit_s: limit, ..ScalingSettings::default() };
    let points = scaling_sweep(&horizons(hmax), &settings)?;
    let first = &points[0];
    let last = &points[points.len() - 1];
    let admm_ratio = last.admm_ms_per_iter / first.admm_ms_per_iter;
    let central_ratio = match (first.centralized_ms, last.centralized_ms) {
        (Some(a), Some(b)) => json!(b / a),
        _ => json!("timeout"),
    };
    print_json(&json!({ "points": points, "admm_ratio": admm_ratio, "centralized_ratio": central_ratio }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Oracle(cmd) => oracle(cmd),
        Command::Bench(cmd) => bench(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
