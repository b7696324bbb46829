//! Command-line front end for `dean-core`: `run`, `ablate` and `verify`.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use dean_core::strategies::StrategyId;
use dean_core::verify::VerifyOptions;

pub use config::{parse_config, DataSource, Overrides, Settings};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dean", version, about = "Batch active learning experiments under label noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment.
    Run(ExperimentArgs),
    /// Run every strategy with and without denoising, at regular and
    /// reduced epochs.
    Ablate {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Comma-separated strategies (default: all).
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<String>,
    },
    /// Run the distributional and numerical self-checks.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = VerifyOptions::default().trials)]
        trials: usize,
        /// Add a check against a corrupted channel, which must fail.
        #[arg(long)]
        negative_control: bool,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Train with the denoising layer (`--denoise` or `--denoise=false`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub denoise: Option<bool>,
    /// Acquisition size per iteration.
    #[arg(long)]
    pub b: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: runs/<timestamp>).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Repetitions run concurrently; results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory with the MNIST IDX files (overrides DEAN_DATA_DIR).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            dataset: self.dataset.clone(),
            strategy: self.strategy.clone(),
            epsilon: self.epsilon,
            denoise: self.denoise,
            b: self.b,
            iterations: self.iterations,
            repetitions: self.repetitions,
            seed: self.seed,
            jobs: self.jobs,
            data_dir: self.data_dir.clone(),
        }
    }

    pub fn settings(&self) -> Result<Settings, CliError> {
        parse_config(self.config.as_deref(), &self.overrides())
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let settings = args.settings()?;
            let out = commands::output_dir(args.output.as_deref())?;
            commands::cmd_run(&settings, &out).map(|_| ())
        }
        Command::Ablate { args, strategies } => {
            let settings = args.settings()?;
            let strategies = if strategies.is_empty() {
                StrategyId::ALL.to_vec()
            } else {
                strategies
                    .iter()
                    .map(|s| s.parse::<StrategyId>().map_err(CliError::from_core))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let out = commands::output_dir(args.output.as_deref())?;
            commands::cmd_ablate(&settings, &strategies, &out).map(|_| ())
        }
        Command::Verify {
            seed,
            trials,
            negative_control,
        } => commands::cmd_verify(&VerifyOptions {
            seed,
            trials,
            negative_control,
        }),
    }
}
