//! `apcd` command-line driver.

mod error;
mod eval_cmd;
mod generate;
mod report;
mod settings;
mod train_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use apcd::schedule::{validate_schedule_pair, ScheduleSpec};
use error::CliError;

#[derive(Parser)]
#[command(name = "apcd", version, about = "Persistent-chain training of pairwise binary models with hidden variables")]
struct Cli {
    /// Worker threads for parallel sections. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by commands that read a key=value config.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Overrides a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generates a random grid model and train/test datasets.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Trains a model and writes the final model, metrics and checkpoints.
    Train(train_cmd::TrainArgs),
    /// Evaluates a model with Parzen windows, AIS and exact measures.
    Eval(eval_cmd::EvalArgs),
    /// Checks a step-size pair against the two-time-scale conditions.
    ValidateSchedule {
        /// E-step schedule, e.g. `power:1:0.6666666666666666`.
        a: String,
        /// M-step schedule, e.g. `power:1:1`.
        b: String,
    },
    /// Builds comparison tables from run directories.
    Report(report::ReportArgs),
}

fn validate_schedule(a: &str, b: &str) -> Result<(), CliError> {
    let parse = |s: &str| s.parse::<ScheduleSpec>().map_err(|e| CliError::Usage(e.to_string()));
    let verdict = validate_schedule_pair(&parse(a)?, &parse(b)?);
    println!("{verdict}");
    if verdict.is_valid() {
        Ok(())
    } else {
        Err(CliError::Reported(error::EXIT_VALIDATION))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    match cli.command {
        Command::Generate { out, config } => generate::run(&out, &config),
        Command::Train(args) => train_cmd::run(&args),
        Command::Eval(args) => eval_cmd::run(&args),
        Command::ValidateSchedule { a, b } => validate_schedule(&a, &b),
        Command::Report(args) => report::run(&args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Reported(_)) {
                eprintln!("apcd: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
