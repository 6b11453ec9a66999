//! `lts`: generate plants, collect rollouts, identify the unstable part,
//! synthesize and verify controllers, and run benchmark sweeps.
//!
//! Exit codes: 0 success, 1 pipeline finished but the plant was not
//! stabilized, 2 invalid input or configuration, 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Numeric(String),
    NotStabilized(f64),
}

impl From<lts_core::Error> for CliError {
    fn from(e: lts_core::Error) -> Self {
        if e.is_invalid_input() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::NotStabilized(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::NotStabilized(r) => write!(f, "not stabilized: closed-loop spectral radius {r}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "lts", version, about = "Learn to stabilize LTI systems from rollouts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone)]
pub struct Common {
    /// JSON file with the command's settings; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for outputs without an explicit path (default: $LTS_OUT_DIR, then ".").
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random plant with a planted real spectrum.
    Gen(commands::GenArgs),
    /// Collect Gaussian-input rollouts from a plant.
    Collect(commands::CollectArgs),
    /// Identify the unstable part from rollouts.
    Identify(commands::IdentifyArgs),
    /// Synthesize a controller for an identified model.
    Synthesize(commands::SynthArgs),
    /// Check a controller on the true plant.
    Verify(commands::VerifyArgs),
    /// Collect, identify, synthesize and verify in one run.
    Pipeline(commands::PipelineArgs),
    /// Run a length or count sweep and write CSV tables.
    Experiment(commands::ExperimentArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Collect(a) => commands::collect(a),
        Command::Identify(a) => commands::identify(a),
        Command::Synthesize(a) => commands::synthesize(a),
        Command::Verify(a) => commands::verify(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lts: {e}");
            ExitCode::from(e.code())
        }
    }
}
