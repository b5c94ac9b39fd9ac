//! Command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use crate::config::RunConfig;
use crate::error::Result;
use crate::pipeline::{execute, write_outputs, Subcommand};
use crate::series::{compare, TimeSeries};

#[derive(Debug, Parser)]
#[command(
    name = "tfchain",
    version,
    about = "Thermofield chain-mapping simulator"
)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, ClapSubcommand)]
pub enum Command {
    /// Chain coefficients of both thermofield reservoirs.
    ChainCoeffs(RunArgs),
    /// Time evolution of the chain with TEBD.
    EvolveMps(RunArgs),
    /// Second-order time-convolutionless master equation.
    EvolveMe(RunArgs),
    /// Closed-form pure-dephasing solution.
    ExactDephasing(RunArgs),
    /// Exact diagonalization of a discrete bath.
    ExactEd(RunArgs),
    /// Per-column deviation between two CSV outputs.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `run.output_dir`).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Output file stem (overrides `run.label`).
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Exit nonzero when any column's max deviation exceeds this.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

/// Exit status when `compare` exceeds its tolerance.
pub const EXIT_TOLERANCE: u8 = 1;
/// Exit status on any error.
pub const EXIT_ERROR: u8 = 2;

fn run_subcommand(sub: Subcommand, args: &RunArgs) -> Result<()> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(dir) = &args.output {
        cfg.set("run.output_dir", &dir.to_string_lossy())?;
    }
    if let Some(label) = &args.label {
        cfg.set("run.label", label)?;
    }
    let out = execute(sub, &cfg)?;
    for path in write_outputs(sub, &cfg, &out, &cfg.output_dir(), cfg.label())? {
        println!("{}", path.display());
    }
    for note in &out.notes {
        println!("{note}");
    }
    Ok(())
}

/// Prints the comparison table; returns whether every column is within tolerance.
fn run_compare(args: &CompareArgs) -> Result<bool> {
    let a = TimeSeries::read_csv(&args.a)?;
    let b = TimeSeries::read_csv(&args.b)?;
    let devs = compare(&a, &b)?;
    println!("column,max_abs,mean_abs,samples");
    let mut ok = true;
    for d in &devs {
        println!(
            "{},{:.6e},{:.6e},{}",
            d.name, d.max_abs, d.mean_abs, d.samples
        );
        if let Some(tol) = args.tolerance {
            ok &= d.max_abs <= tol;
        }
    }
    Ok(ok)
}

pub fn run(cli: Cli) -> ExitCode {
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    let result = match &cli.command {
        Command::ChainCoeffs(a) => run_subcommand(Subcommand::ChainCoeffs, a).map(|_| true),
        Command::EvolveMps(a) => run_subcommand(Subcommand::EvolveMps, a).map(|_| true),
        Command::EvolveMe(a) => run_subcommand(Subcommand::EvolveMe, a).map(|_| true),
        Command::ExactDephasing(a) => run_subcommand(Subcommand::ExactDephasing, a).map(|_| true),
        Command::ExactEd(a) => run_subcommand(Subcommand::ExactEd, a).map(|_| true),
        Command::Compare(a) => run_compare(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_TOLERANCE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn argument_definitions_are_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_run_and_compare_flags() {
        let cli = Cli::try_parse_from([
            "tfchain",
            "evolve-mps",
            "--config",
            "a.cfg",
            "--output",
            "out",
            "--label",
            "x",
        ])
        .unwrap();
        let Command::EvolveMps(a) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(a.label.as_deref(), Some("x"));
        let cli = Cli::try_parse_from([
            "tfchain",
            "compare",
            "--a",
            "x.csv",
            "--b",
            "y.csv",
            "--tolerance",
            "0.02",
        ])
        .unwrap();
        assert!(
            matches!(cli.command, Command::Compare(CompareArgs { tolerance: Some(t), .. }) if t == 0.02)
        );
        assert!(Cli::try_parse_from(["tfchain", "evolve-mps"]).is_err());
    }
}
