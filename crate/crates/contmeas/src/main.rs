use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contmeas::checks::{self, Budget};
use contmeas::commands::{self, Written};
use contmeas::config::RunConfig;
use contmeas::error::AppError;

/// Continuous measurement of an anharmonic oscillator: ensembles, sweeps,
/// breakdown scans and compensation schedules.
#[derive(Debug, Parser)]
#[command(name = "contmeas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one ensemble; writes run.csv and summary.json.
    Simulate(RunArgs),
    /// Run a parameter sweep; writes sweep.csv and fit.json.
    Sweep(RunArgs),
    /// Best accuracy against window length; writes breakdown.csv and breakdown.json.
    ScanBreakdown(RunArgs),
    /// Write the scheme's compensation schedules as CSV.
    ExportSchedule(RunArgs),
    /// Run the built-in checks and print a report.
    Verify {
        /// Use the larger ensembles of the acceptance suite.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the ensemble size of the config file.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

type Runner = fn(&RunConfig, &std::path::Path) -> Result<Written, AppError>;

fn execute(args: &RunArgs, runner: Runner) -> Result<(), AppError> {
    let config = RunConfig::load(&args.config)?.resolved(args.seed, args.samples)?;
    let written = runner(&config, &args.out)?;
    if !args.quiet {
        for note in &written.notes {
            eprintln!("{note}");
        }
        for file in &written.files {
            println!("{}", file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, runner): (&RunArgs, Runner) = match &cli.command {
        Command::Simulate(a) => (a, commands::simulate),
        Command::Sweep(a) => (a, commands::sweep),
        Command::ScanBreakdown(a) => (a, commands::scan_breakdown),
        Command::ExportSchedule(a) => (a, commands::export_schedule),
        Command::Verify { full, quiet } => {
            let budget = if *full { Budget::FULL } else { Budget::QUICK };
            let report = checks::run_all(&budget);
            if !quiet {
                print!("{}", checks::render(&report));
            }
            return if report.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match execute(args, runner) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
