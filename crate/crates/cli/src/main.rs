use clap::{Parser, Subcommand};
use gitnet_cli::commands::{cmd_eval, cmd_flops, cmd_generate, cmd_train};
use gitnet_cli::{CliError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gitnet", version, about = "Operator learning with GIT-Net")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test datasets.
    Generate { config: PathBuf },
    /// Fit PCA bases, train, and write the checkpoint and history.
    Train { config: PathBuf },
    /// Report relative errors of a checkpoint on a dataset.
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        /// Per-sample error CSV.
        #[arg(long, default_value = "errors.csv")]
        out: PathBuf,
    },
    /// Print a cost report for the configured model and baselines.
    Flops {
        config: PathBuf,
        /// Add flops measured by the kernel counter.
        #[arg(long)]
        instrument: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config } => print!("{}", cmd_generate(&RunConfig::load(&config)?)?),
        Command::Train { config } => print!("{}", cmd_train(&RunConfig::load(&config)?)?),
        Command::Eval { checkpoint, dataset, out } => print!("{}", cmd_eval(&checkpoint, &dataset, &out)?),
        Command::Flops { config, instrument, out } => {
            let csv = cmd_flops(&RunConfig::load(&config)?, instrument)?;
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
