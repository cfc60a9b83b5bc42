//! `vibkit`: batch front end for contour analysis, vibrato labeling,
//! synthesis, energy coding and evaluation.
//!
//! Every run prints a JSON manifest on stdout. Exit codes: 0 success,
//! 1 invalid arguments or configuration, 2 unreadable or malformed input,
//! 3 numerical failure (diverged training, undefined metric).

mod commands;
mod config;
mod formats;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<vibkit::Error> for CliError {
    fn from(e: vibkit::Error) -> Self {
        match e.root() {
            vibkit::Error::Diverged { .. } | vibkit::Error::UndefinedMetric(_) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "vibkit",
    version,
    about = "Vibrato-aware pitch contour toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file of parameter values; flags override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub set: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a contour into intonation and vibrato with per-frame depth and rate
    Analyze(commands::AnalyzeArgs),
    /// Rebuild a contour from an analysis, a score and (optionally) likeliness
    Synth(commands::SynthArgs),
    /// Inject labelled vibrato into contours to build labeler training data
    Simulate(commands::SimulateArgs),
    /// Train the likeliness labeler on simulated data
    TrainLabeler(commands::TrainLabelerArgs),
    /// Score every frame of a contour with a trained labeler
    Label(commands::LabelArgs),
    /// Train the latent energy codec on a power spectrogram
    TrainEnergy(commands::TrainEnergyArgs),
    /// Compare a trained codec with the scalar and no-energy baselines
    EnergyEval(commands::EnergyEvalArgs),
    /// F0 RMSE, F0 correlation and (optionally) MCD between two renditions
    Eval(commands::EvalArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let manifest = match cli.command {
        Command::Analyze(a) => commands::analyze(a),
        Command::Synth(a) => commands::synth(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::TrainLabeler(a) => commands::train_labeler(a),
        Command::Label(a) => commands::label(a),
        Command::TrainEnergy(a) => commands::train_energy(a),
        Command::EnergyEval(a) => commands::energy_eval(a),
        Command::Eval(a) => commands::eval(a),
    }?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest always serializes");
    println!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
