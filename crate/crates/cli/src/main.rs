//! `stcast`: spatiotemporal crime forecasting from event logs.

mod commands;
mod config;
mod error;
mod heatmap;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "stcast", version, about = "Spatiotemporal crime forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Every subcommand takes `--config <file>` (flat `key = value` lines) and
/// `--key value` overrides; all outputs go under `--out <dir>`.
#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded synthetic events, weather and holidays.
    Synth(Rest),
    /// Bin events into an hourly grid cube and build external features.
    Ingest(Rest),
    /// Super-resolve, integrate and scale a cube; split train and test hours.
    Preprocess(Rest),
    /// Train the residual network.
    Train(Rest),
    /// Forecast the test hours from a float or ternary checkpoint.
    Predict(Rest),
    /// Compare forecast directories against the held-out truth.
    Evaluate(Rest),
    /// Train a fully ternary network with shadow weights.
    Ternarize(Rest),
    /// Historical average, KNN and ARIMA forecasts.
    Baselines(Rest),
    /// Finite-difference check of the network's gradients.
    Gradcheck(Rest),
}

#[derive(Debug, clap::Args)]
struct Rest {
    #[arg(
        value_name = "--KEY VALUE",
        num_args = 0..,
        trailing_var_arg = true,
        allow_hyphen_values = true
    )]
    args: Vec<String>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("STCAST_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("STCAST_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(command: Command) -> Result<(), CliError> {
    init_threads()?;
    let (name, rest, f): (&str, Rest, fn(&mut Config, &std::path::Path) -> Result<commands::Stats, CliError>) =
        match command {
            Command::Synth(r) => ("synth", r, commands::synth),
            Command::Ingest(r) => ("ingest", r, commands::ingest),
            Command::Preprocess(r) => ("preprocess", r, commands::preprocess),
            Command::Train(r) => ("train", r, commands::train),
            Command::Predict(r) => ("predict", r, commands::predict),
            Command::Evaluate(r) => ("evaluate", r, commands::evaluate),
            Command::Ternarize(r) => ("ternarize", r, commands::ternarize),
            Command::Baselines(r) => ("baselines", r, commands::baselines),
            Command::Gradcheck(r) => ("gradcheck", r, commands::gradcheck),
        };
    let mut cfg = Config::from_args(&rest.args)?;
    let out = cfg.out_dir()?;
    let stats = f(&mut cfg, &out)?;
    manifest::write_manifest(&out, name, &cfg, &stats)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stcast: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
