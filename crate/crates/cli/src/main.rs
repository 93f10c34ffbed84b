//! `coiso`: flows, capacity bounds, leafwise chords and non-squeezing tables
//! from JSON run configurations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "coiso", version, about = "Coisotropic capacity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a Hamiltonian flow and write the trajectory.
    Flow(Common),
    /// Build and certify a lower-bound witness; tabulate 𝒜(r).
    Capacity(Common),
    /// Run the minimax search for a positive-action leafwise chord.
    Chord(Common),
    /// Evaluate the non-squeezing verdict over an (r, A) grid.
    Nonsqueeze(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the solvers; all cores if absent.
    #[arg(long)]
    threads: Option<usize>,
}

/// A failed run: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    pub fn io(e: std::io::Error, what: &str) -> Self {
        Self::new(1, format!("cannot write {what}: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Flow(c) | Command::Capacity(c) | Command::Chord(c) | Command::Nonsqueeze(c) => c.clone(),
    };
    if let Some(t) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Flow(c) => commands::flow(&c),
        Command::Capacity(c) => commands::capacity(&c),
        Command::Chord(c) => commands::chord(&c),
        Command::Nonsqueeze(c) => commands::nonsqueeze(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
