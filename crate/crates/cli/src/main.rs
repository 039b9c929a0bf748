use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

/// Exit status and message for a failed run.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_IO: u8 = 1;
pub const EXIT_SCHEMA: u8 = 2;
pub const EXIT_DESIGN: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_REGIME: u8 = 5;

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_SCHEMA, message: msg.into() }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_IO, message: msg.into() }
    }

    pub fn regime(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_REGIME, message: msg.into() }
    }
}

impl From<bragg_core::Error> for CliError {
    fn from(e: bragg_core::Error) -> Self {
        use bragg_core::Error::*;
        let code = match &e {
            Domain(_) | Format(_) => EXIT_SCHEMA,
            Design(_) => EXIT_DESIGN,
            Numerical(_) => EXIT_NUMERICAL,
            Regime(_) => EXIT_REGIME,
            Io(_) => EXIT_IO,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

/// Structure-factor entanglement witnesses and Bragg-scattering reconstruction.
#[derive(Parser, Debug)]
#[command(name = "bragg", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (default: output_dir from the config, else ./bragg_out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Patches one config key, e.g. state.n_sites=6. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the configured state and write it with a summary.
    State,
    /// Evaluate the configured witness on the state.
    Witness,
    /// Tabulate S^{ab}(q), C^a(q) and the Dicke witness over a q grid.
    ScanQ,
    /// Forward-simulate measurement records for the default design.
    Simulate {
        /// Replace intensities by shot-noise estimates using [noise].
        #[arg(long)]
        noisy: bool,
    },
    /// Reconstruct correlators, two-body states and witnesses from records.
    Reconstruct {
        /// Record file (default: <out>/records.csv).
        records: Option<PathBuf>,
    },
    /// Run the noisy witness pipeline and write a noise report.
    Noise,
    /// Check the far-detuned, bad-cavity and adiabatic-pulse conditions.
    Validate,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::schema("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::io(format!("thread pool: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::schema("--config PATH is required"))?;
    let cfg = config::load(&path, &cli.overrides, cli.seed)?;
    let out = cli
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("bragg_out"));
    let ctx = commands::Context::new(cfg, out);
    match cli.command {
        Command::State => commands::state(&ctx),
        Command::Witness => commands::witness(&ctx),
        Command::ScanQ => commands::scan_q(&ctx),
        Command::Simulate { noisy } => commands::simulate(&ctx, noisy),
        Command::Reconstruct { records } => commands::reconstruct(&ctx, records),
        Command::Noise => commands::noise(&ctx),
        Command::Validate => commands::validate(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
