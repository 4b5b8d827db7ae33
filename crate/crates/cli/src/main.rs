use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use insub_cli::{commands, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "insub", version, about = "Active subspace detection, reduced-domain sampling and RBF surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample gradients and estimate the active subspace.
    Detect(Common),
    /// Matrix completion study on the sampled Jacobian.
    Complete(Common),
    /// Build the reduced-domain design.
    Sample(Common),
    /// Fit the surrogate and compare it with the full model.
    Surrogate(Common),
    /// All stages in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Number of independent replicates.
        #[arg(long)]
        replicates: Option<usize>,
    },
}

fn load(common: &Common, replicates: Option<usize>) -> Result<ExperimentConfig, CliError> {
    ExperimentConfig::from_file(&common.config)?.with_overrides(common.seed, common.out.clone(), replicates)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Detect(c) => commands::detect(&load(&c, None)?).map(drop),
        Command::Complete(c) => commands::complete(&load(&c, None)?).map(drop),
        Command::Sample(c) => commands::sample(&load(&c, None)?).map(drop),
        Command::Surrogate(c) => commands::surrogate(&load(&c, None)?).map(drop),
        Command::Pipeline { common, replicates } => commands::pipeline(&load(&common, replicates)?).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.stage() {
                Some(stage) => eprintln!("error [{stage}]: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
