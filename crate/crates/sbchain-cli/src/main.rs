mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("numeric failure at step {step}: {source}")]
    Step { step: usize, source: sbchain::Error },
    #[error("numeric failure: {0}")]
    Numeric(#[from] sbchain::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Step { .. } => 2,
            CliError::Numeric(sbchain::Error::Observable(sbchain::observables::ObservableError::TooLarge { .. })) => 1,
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "sbchain", version, about = "Driven Ising chain with y/z bosonic baths")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evolve and write observables.csv and report.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write a snapshot here when the run ends.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a snapshot.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Check a config and print its diagnostics.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample A_T(ω) and C(t) of every noisy axis.
    BathInfo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        omega_max: f64,
        /// Frequency samples on each side of zero.
        #[arg(long, default_value_t = 100)]
        half_points: usize,
        #[arg(long, default_value_t = 5.0)]
        t_max: f64,
        #[arg(long, default_value_t = 100)]
        t_points: usize,
    },
    /// Write the η cache arrays of every noisy axis.
    EtaDump {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Exhaustive path sum for small chains.
    Brute {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Snapshot of a run to compare against; its step count is used.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.cmd {
        Cmd::Run { config, out, checkpoint, resume } => commands::run(&config::load(&config)?, &out, checkpoint.as_deref(), resume.as_deref()),
        Cmd::Validate { config } => commands::validate(&config),
        Cmd::BathInfo { config, out, omega_max, half_points, t_max, t_points } => {
            commands::bath_info(&config::load(&config)?, &out, omega_max, half_points, t_max, t_points)
        }
        Cmd::EtaDump { config, out } => commands::eta_dump(&config::load(&config)?, &out),
        Cmd::Brute { config, out, compare } => commands::brute(&config::load(&config)?, &out, compare.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
