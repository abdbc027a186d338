use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nmprox_cli::checks::{self, CheckSuite};
use nmprox_cli::experiment::{self, ExperimentError};
use nmprox_cli::ExperimentConfig;

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_CHECKS: u8 = 3;

#[derive(Parser)]
#[command(
    name = "nmprox",
    version,
    about = "Nonmonotone proximal gradient experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the monotone, mean-rule and max-rule variants on one start.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the property check suite.
    Check {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
}

fn failure_code(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) | ExperimentError::Solve(_) => EXIT_CONFIG,
        ExperimentError::Io { .. } | ExperimentError::Csv { .. } => EXIT_CONFIG,
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn cmd_run(config: PathBuf, out: Option<PathBuf>) -> ExitCode {
    let config = match load(&config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out_dir = out.unwrap_or_else(|| config.out_dir.clone());
    match experiment::run_experiment(&config, &out_dir) {
        Ok(summary) => {
            for run in &summary.runs {
                println!(
                    "{} repeat {}: {:?} after {} iterations, residual {:.3e}, audit {}",
                    summary.problem,
                    run.repeat,
                    run.status,
                    run.iterations,
                    run.final_residual.unwrap_or(f64::NAN),
                    if run.audit.passed() { "pass" } else { "FAIL" },
                );
            }
            println!("wrote {}", out_dir.join(experiment::SUMMARY_FILE).display());
            if summary.any_error() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(failure_code(&e))
        }
    }
}

fn cmd_compare(config: PathBuf) -> ExitCode {
    let config = match load(&config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match experiment::compare(&config) {
        Ok(rows) => {
            print!("{}", experiment::format_comparison(&rows));
            if rows.iter().any(|r| r.result.status.is_error()) {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(failure_code(&e))
        }
    }
}

fn cmd_check(filter: Option<String>) -> ExitCode {
    let outcomes = CheckSuite::default().run(filter.as_deref());
    if outcomes.is_empty() {
        eprintln!(
            "error: no check matches `{}`; available: {}",
            filter.unwrap_or_default(),
            checks::CHECK_NAMES.join(", ")
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    print!("{}", checks::format_table(&outcomes));
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} checks, {failed} failed", outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECKS)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Compare { config } => cmd_compare(config),
        Command::Check { filter } => cmd_check(filter),
    }
}
