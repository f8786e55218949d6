//! `segopt`: segment-wise constrained encoding from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 encoder failure.

mod analysis;
mod classify;
mod config;
mod failure;
mod inputs;
mod optimize;
mod report;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "segopt", version, about = "Segment-wise rate/quality/speed constrained encoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode every grid configuration on the chosen segments.
    Sweep(sweep::SweepArgs),
    /// Run the constrained per-segment controller.
    Optimize(Box<optimize::OptimizeArgs>),
    /// Label activity regions and map them to constraints.
    Classify(classify::ClassifyArgs),
    /// Pairwise BD-rate savings table.
    Bdrate(analysis::BdrateArgs),
    /// PSNR, SSIM and VMAF of a decoded video against its source.
    Metrics(analysis::MetricsArgs),
    /// Print the tables of an `optimize` output directory.
    Report(report::ReportArgs),
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(a) => sweep::run(&a),
        Command::Optimize(a) => optimize::run(&a),
        Command::Classify(a) => classify::run(&a),
        Command::Bdrate(a) => analysis::run_bdrate(&a),
        Command::Metrics(a) => analysis::run_metrics(&a),
        Command::Report(a) => report::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::USAGE } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
