//! Batch experiments over the `hball-core` library.
//!
//! Each command reads a [`RunConfig`], runs its checks and writes CSV tables,
//! a JSON summary and the resolved configuration to the output directory.

pub mod commands;
pub mod config;
pub mod report;

use thiserror::Error;

pub use config::RunConfig;
pub use report::Report;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<hball_core::Error> for CliError {
    fn from(e: hball_core::Error) -> Self {
        if e.is_numerical() {
            Self::Numerical(e.to_string())
        } else {
            Self::Config(e.to_string())
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const INVARIANT: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Dyadic,
    Czd,
    KernelBounds,
    Weaktype,
}

/// Runs `command` on the resolved configuration inside a pool of `cfg.workers` threads.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| match command {
        Command::Dyadic => commands::dyadic::run(cfg),
        Command::Czd => commands::czd::run(cfg),
        Command::KernelBounds => commands::bounds::run(cfg),
        Command::Weaktype => commands::weaktype::run(cfg),
    })
}
