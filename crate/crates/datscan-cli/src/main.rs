//! `datscan` — operator surface of the DaTscan classification
//! pipeline: phantom synthesis, slice extraction, split planning,
//! cross-validation, final training and evaluation reports.

mod commands;
mod config;
mod errors;
mod plot;
mod report;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use config::{Overrides, PipelineConfig};
use errors::CliResult;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(
    name = "datscan",
    version,
    about = "SPECT slice-classification pipeline",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Pipeline configuration file (TOML); omitted means built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Base directory for datasets (overrides the config file and
    /// the DATSCAN_DATA_ROOT environment variable).
    #[arg(long, global = true, value_name = "DIR")]
    data_root: Option<PathBuf>,
    /// Base directory for run outputs.
    #[arg(long, global = true, value_name = "DIR")]
    output_root: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic striatal phantom dataset.
    Synth(commands::synth::SynthArgs),
    /// Convert volumes into RGB slice-triplet PNGs.
    Preprocess(commands::preprocess::PreprocessArgs),
    /// Plan dataset splits without training.
    Split(commands::split::SplitArgs),
    /// Run stratified k-fold cross-validation.
    Crossval(commands::crossval::CrossvalArgs),
    /// Train the final model and score the held-out test set.
    Train(commands::train::TrainArgs),
    /// Recompute every metric from a predictions file.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Re-render reports from a finished run directory.
    Report(commands::report::ReportArgs),
}

fn main() -> ExitCode {
    // clap's own exit code for usage errors is 2; remap to our contract
    // (1 usage, 2 data, 3 training) by parsing manually.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {:#}", err.source);
            ExitCode::from(err.failure.code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let overrides = Overrides {
        config: cli.global.config,
        data_root: cli.global.data_root,
        output_root: cli.global.output_root,
    };
    let config = PipelineConfig::resolve(&overrides)?;
    match &cli.command {
        Command::Synth(args) => commands::synth::run(&config, args),
        Command::Preprocess(args) => commands::preprocess::run(&config, args),
        Command::Split(args) => commands::split::run(&config, args),
        Command::Crossval(args) => commands::crossval::run(&config, args),
        Command::Train(args) => commands::train::run(&config, args),
        Command::Evaluate(args) => commands::evaluate::run(&config, args),
        Command::Report(args) => commands::report::run(&config, args),
    }
}
