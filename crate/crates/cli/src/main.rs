//! `zcf`: batch verification runs for zero-curvature factorization,
//! Weyl-function evolution, the structured-operator inverse problem, and
//! dressed (Darboux-transformed) families.
//!
//! Every subcommand reads one JSON configuration, writes CSV reports, and
//! exits 0 when all checks pass, 2 on a numerical failure, 3 on bad input.
//! Identical configurations produce byte-identical CSV files. The
//! `ZCF_THREADS` environment variable caps worker parallelism.

mod commands;
mod config;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Ctx, Verdict};
use config::{CliError, CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "zcf", version, about = "Zero-curvature factorization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the fundamental-solution factorization over the report grid.
    FactorCheck(RunArgs),
    /// Compare the direct Weyl function with its time evolution.
    WeylEvolve(RunArgs),
    /// Recover the potential from boundary spectral data.
    Invert(RunArgs),
    /// Build a dressed family and verify its defining identities.
    Gbdt(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV reports; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured integration density (steps per unit).
    #[arg(long)]
    steps: Option<usize>,
}

fn init_threads() -> CliResult<()> {
    let Some(raw) = std::env::var_os("ZCF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .to_str()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::config("ZCF_THREADS must be a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot size the worker pool: {e}")))
}

fn prepare(args: &RunArgs) -> CliResult<Ctx> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(steps) = args.steps {
        cfg.steps_per_unit = steps;
    }
    cfg.validate()?;
    let out = match (&args.out, &cfg.out_dir) {
        (Some(dir), _) => dir.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => {
            return Err(CliError::config(
                "no output directory: pass --out or set out_dir in the configuration",
            ));
        }
    };
    Ok(Ctx { cfg, out })
}

fn run(cli: &Cli) -> CliResult<Verdict> {
    init_threads()?;
    let (args, runner): (&RunArgs, fn(&Ctx) -> CliResult<Verdict>) = match &cli.command {
        Command::FactorCheck(a) => (a, commands::factor_check),
        Command::WeylEvolve(a) => (a, commands::weyl_evolve_cmd),
        Command::Invert(a) => (a, commands::invert_cmd),
        Command::Gbdt(a) => (a, commands::gbdt_cmd),
    };
    let ctx = prepare(args)?;
    runner(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::NumericalFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
