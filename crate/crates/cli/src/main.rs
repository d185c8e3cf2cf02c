//! `actloc`: synthesize data, segment, train, evaluate and visualize.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 contract violation.

mod commands;
mod config;
mod overlay;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Common;

#[derive(Parser, Debug)]
#[command(name = "actloc", version, about = "Action-object localization and action classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset into --out.
    Synth(commands::SynthArgs),
    /// Write coarse, fine-window and refined maps as .fpm files into --out.
    Segment(commands::SplitArgs),
    /// Write per-image candidates (and scores, with --model) as JSON into --out.
    Pipeline(commands::SplitArgs),
    /// Train on the train split and write the model bundle to --model.
    Train,
    /// Evaluate --model on the test split.
    Eval,
    /// Retrain and evaluate one row per removed block, or the oracle study.
    Ablate(commands::AblateArgs),
    /// Write PPM overlays of the top-q candidates into --out.
    Visualize(commands::SplitArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(actloc::Error),
}

impl From<actloc::Error> for CliError {
    fn from(e: actloc::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::resolve(&cli.common)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => commands::synth(&cfg, &a),
        Command::Segment(a) => commands::segment(&cfg, &a),
        Command::Pipeline(a) => commands::pipeline(&cfg, &a),
        Command::Train => commands::train(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Ablate(a) => commands::ablate(&cfg, &a),
        Command::Visualize(a) => commands::visualize(&cfg, &a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
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
