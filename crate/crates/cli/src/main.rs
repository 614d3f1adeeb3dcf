use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod experiments;
mod report;
mod run;
mod svg;

use config::{ExperimentConfig, Overrides};
use error::CliError;

/// Experiments on truncated Hilbert and Riesz transforms.
#[derive(Parser)]
#[command(name = "trunctx", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Cells per axis, replacing the config's resolution list.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Merge the runs found in a directory into report.json and report.md.
    Report { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            resolution,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply(&Overrides {
                out,
                seed,
                resolution,
            });
            let dir = run::run(&cfg)?;
            println!("{} written to {}", cfg.experiment, dir.display());
        }
        Command::Report { dir } => {
            let r = report::emit(&dir)?;
            println!(
                "report over {} runs ({} skipped) written to {}",
                r.runs.len(),
                r.skipped_count,
                dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
