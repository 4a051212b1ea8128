//! `confound-forge`: calibrate coefficient tables, run simulation grids,
//! analyze datasets with gold-standard measurements, and chart results.
//!
//! Exit codes: 0 success, 1 failed `verify-trends` checks, 2 config error,
//! 3 data error, 4 numeric failure.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod analyze;
mod calibrate;
mod config;
mod error;
mod report;
mod simulate;
mod svg;
mod verify;

#[derive(Debug, Parser)]
#[command(name = "confound-forge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve treatment/outcome coefficients for unit total confounding.
    Calibrate(calibrate::CalibrateArgs),
    /// Run a Monte Carlo grid and write per-cell summaries.
    Simulate(simulate::SimulateArgs),
    /// Estimate effects on a dataset with error-prone covariates.
    Analyze(analyze::AnalyzeArgs),
    /// Render charts and a table from a summary CSV.
    Report(report::ReportArgs),
    /// Check a summary CSV against the expected bias and coverage trends.
    VerifyTrends(verify::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => calibrate::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Analyze(a) => analyze::run(a),
        Command::Report(a) => report::run(a),
        Command::VerifyTrends(a) => verify::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("confound-forge: {e}");
            e.exit_code()
        }
    }
}
