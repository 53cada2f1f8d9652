//! `ppdiag` command-line interface.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or model; exit code 2.
    Schema(String),
    /// Fit or simulation failure; exit code 3.
    Numerical(String),
    /// Unreadable or malformed files; exit code 4.
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<ppdiag::Error> for CliError {
    fn from(e: ppdiag::Error) -> Self {
        use ppdiag::Error as E;
        match e {
            E::InvalidWindow(_)
            | E::InvalidParameter(_)
            | E::Unsupported(_)
            | E::NotSimulable(_)
            | E::EmptyErosion(_)
            | E::Json(_) => CliError::Schema(e.to_string()),
            E::Io(_) | E::Parse(_) | E::PointOutsideWindow { .. } | E::DuplicatePoint { .. } => {
                CliError::Io(e.to_string())
            }
            E::TooFewPoints(_)
            | E::OutsideDomain { .. }
            | E::NonConvergence { .. }
            | E::Numerical(_)
            | E::TooManyDropped { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ppdiag", version, about = "Residual diagnostics for spatial point process models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "PPDIAG_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the configured model; writes pattern.csv and pattern.json.
    Simulate,
    /// Fit the configured model form to a pattern; writes fit.json.
    Fit {
        pattern: PathBuf,
    },
    /// Evaluate the configured diagnostics; writes one CSV per diagnostic and model.
    Diag {
        pattern: PathBuf,
        /// Fitted-model JSON files; the configured model is fitted if none are given.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Monte Carlo envelope of one diagnostic; writes envelope.csv.
    Envelope {
        pattern: PathBuf,
    },
    /// Covariate score tests; writes score_test.json, threshold.csv and optional field rasters.
    ScoreTest {
        pattern: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Schema(format!("thread pool: {e}")))?;
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Fit { pattern } => commands::fit(&cfg, &pattern, &out),
        Command::Diag { pattern, models } => commands::diag(&cfg, &pattern, &models, &out),
        Command::Envelope { pattern } => commands::envelope(&cfg, &pattern, &out),
        Command::ScoreTest { pattern } => commands::score_test(&cfg, &pattern, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ppdiag: {e}");
            ExitCode::from(e.code())
        }
    }
}
