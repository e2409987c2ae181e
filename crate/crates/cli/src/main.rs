//! `propertime` — experiment runner.
//!
//! Exit codes: 0 success, 1 runtime or configuration error, 2 field failed
//! the admissibility gate, 3 at least one verification suite failed.

mod commands;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "propertime", version, about = "Proper-time diffusions driven by Klein-Gordon plane waves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Experiment config (JSON). Defaults to the bundled plane-wave config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of paths.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run even if the field fails the admissibility gate.
    #[arg(long, global = true)]
    pub force: bool,
    /// Simulate instead of reading the ensemble from the output directory.
    #[arg(long, global = true)]
    pub simulate_first: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Check admissibility, integrate the ensemble, write CSV and manifest.
    Simulate,
    /// Time-change the stored ensemble onto the proper-time grid.
    Timechange,
    /// Run verification suites and write reports.
    Verify {
        /// Comma-separated suite names.
        #[arg(long)]
        only: Option<String>,
        /// Copy the first Wiener component into the second (negative control).
        #[arg(long)]
        break_independence: bool,
    },
    /// Fokker-Planck cross-check with density snapshots.
    Fpcheck,
    /// Print the stored reports as a table.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate => commands::simulate(&cli.common),
        Command::Timechange => commands::timechange(&cli.common),
        Command::Verify {
            only,
            break_independence,
        } => commands::verify(&cli.common, only.as_deref(), break_independence),
        Command::Fpcheck => commands::fpcheck(&cli.common),
        Command::Report => commands::report(&cli.common),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
