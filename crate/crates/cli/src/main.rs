//! `spike`: configuration-driven experiment runner for spiked matrix
//! estimation. Each run subcommand reads a JSON config, executes the named
//! experiment, and writes a CSV plus a manifest into the output directory.
//!
//! Exit codes: 0 success (or all comparisons passed), 1 comparison
//! failures, 2 config error, 3 convergence failure with partial results.

mod compare;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Experiment;
use run::RunError;

#[derive(Parser)]
#[command(name = "spike", version, about = "spiked matrix estimation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form limit curve over an SNR grid
    TheoryCurve(RunArgs),
    /// Gibbs and spectral estimates over an (SNR, instance) grid
    McSweep(RunArgs),
    /// Within-chain overlap variance across problem sizes
    Concentration(RunArgs),
    /// Monte Carlo check of the scalar spherical channel limit
    Lemma1(RunArgs),
    /// Interpolation path ODE runs at chosen starting points
    InterpPath(RunArgs),
    /// Thermodynamic integration of the mutual information
    Thermo(RunArgs),
    /// Check an estimate table against a theory curve
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores)
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// CSV with the theory curve (lambda + value columns)
    theory: PathBuf,
    /// CSV with estimates to check
    mc: PathBuf,
    /// Absolute tolerance floor
    #[arg(long, default_value_t = 0.05)]
    abs_tol: f64,
    /// Multiplier on the per-row standard error
    #[arg(long, default_value_t = 3.0)]
    k_sigma: f64,
    /// Which estimator rows to check
    #[arg(long, default_value = "gibbs_mmse")]
    estimator: String,
    /// Theory column to compare against
    #[arg(long, default_value = "mmse_limit")]
    column: String,
}

const EXIT_COMPARE_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CONVERGENCE: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::TheoryCurve(a) => run_experiment("theory_curve", a),
        Cmd::McSweep(a) => run_experiment("mc_sweep", a),
        Cmd::Concentration(a) => run_experiment("concentration", a),
        Cmd::Lemma1(a) => run_experiment("lemma1", a),
        Cmd::InterpPath(a) => run_experiment("interp_path", a),
        Cmd::Thermo(a) => run_experiment("thermo", a),
        Cmd::Compare(a) => run_compare(a),
    }
}

fn run_experiment(expected_kind: &str, args: RunArgs) -> ExitCode {
    let exp = match Experiment::load(&args.config, args.seed, args.out, args.jobs) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if exp.kind_str() != expected_kind {
        eprintln!(
            "config error: kind: config declares {:?} but the subcommand expects {:?}",
            exp.kind_str(),
            expected_kind
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    match run::execute(&exp) {
        Ok(()) => {
            println!(
                "wrote {}",
                exp.out_dir().join(format!("{}.csv", exp.stem())).display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            match e {
                RunError::Config(_) => ExitCode::from(EXIT_CONFIG),
                RunError::Convergence(_) => ExitCode::from(EXIT_CONVERGENCE),
            }
        }
    }
}

fn run_compare(args: CompareArgs) -> ExitCode {
    match compare::compare_files(
        &args.theory,
        &args.mc,
        args.abs_tol,
        args.k_sigma,
        &args.estimator,
        &args.column,
    ) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("compare: {} passed, {} failed", report.passed, report.failed);
            if report.failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_COMPARE_FAIL)
            }
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
