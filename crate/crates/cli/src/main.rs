mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Sparse-graph recurrent forecasting workbench.
///
/// Every command works inside one run directory, `<out>/run-<hash>-s<seed>`,
/// derived from the resolved config. Keys can be overridden with
/// environment variables such as `GLGCRN_TRAIN__LEARNING_RATE=0.01`.
#[derive(Debug, Parser)]
#[command(name = "glgcrn", version)]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `run.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Synth,
    /// Estimate the precision matrix (or path) and edge probabilities.
    FitGraph,
    /// Train the forecaster on the fitted graph.
    Train,
    /// Score the model and the HA/VAR baselines on the test split.
    Evaluate,
    /// Print the evaluation report.
    Report,
}

fn resolve(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve(cli)?;
    let dir = match cli.command {
        Command::Synth => commands::cmd_synth(&cfg)?,
        Command::FitGraph => commands::cmd_fit_graph(&cfg)?,
        Command::Train => commands::cmd_train(&cfg)?,
        Command::Evaluate => commands::cmd_evaluate(&cfg)?,
        Command::Report => {
            print!("{}", commands::cmd_report(&cfg)?);
            return Ok(());
        }
    };
    println!("{}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
