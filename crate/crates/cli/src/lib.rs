//! Experiment runner: reads a `key = value` config, runs one subcommand and
//! writes CSV/JSON outputs plus a `manifest.json` into the output directory.

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Resource(String),
    #[error("no convergence: {0}")]
    Convergence(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(critperc::Error),
}

impl From<critperc::Error> for CliError {
    fn from(e: critperc::Error) -> Self {
        use critperc::Error as E;
        match e {
            E::InvalidSpec(_) | E::InvalidArgument(_) | E::Usage(_) => CliError::Config(e.to_string()),
            E::Resource { .. } => CliError::Resource(e.to_string()),
            E::Convergence { .. } | E::Divergence(_) | E::Truncation { .. } => CliError::Convergence(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    /// 2 config, 3 resource cap, 4 numeric non-convergence, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Convergence(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Sweep,
    Window,
    Spectra,
    Couple,
    Zlambda,
    Diagrams,
    OracleCheck,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Sweep => "sweep",
            Subcommand::Window => "window",
            Subcommand::Spectra => "spectra",
            Subcommand::Couple => "couple",
            Subcommand::Zlambda => "zlambda",
            Subcommand::Diagrams => "diagrams",
            Subcommand::OracleCheck => "oracle-check",
        }
    }
}

#[derive(Debug, clap::Parser)]
#[command(name = "critperc", version, about = "Percolation experiments on high-dimensional tori")]
pub struct Args {
    /// Plain-text `key = value` config file. Without it all keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed, decimal or 0x-hex; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, value_enum)]
    pub subcommand: Subcommand,
}

/// Runs the parsed invocation and returns the process exit code.
pub fn execute(args: &Args) -> i32 {
    match try_execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("critperc: {e}");
            e.exit_code()
        }
    }
}

pub fn try_execute(args: &Args) -> Result<(), CliError> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::parse(&text, args.seed.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| run::run(args.subcommand, &cfg, &text, &args.out))
}
