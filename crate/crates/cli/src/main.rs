use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hball_cli::{exit, run, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "hball", version, about = "Reproducible experiments on the unit ball")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overriding the configuration (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    emit_config: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Build a dyadic system and check partition, nesting, separation and sandwich.
    Dyadic,
    /// Decompose each family member at each threshold and check every clause.
    Czd,
    /// Estimate kernel size and gradient constants and check Hörmander integrals.
    KernelBounds,
    /// Scan weak-type ratios and run the good/bad pipeline.
    Weaktype,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("hball: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(args: &Args) -> Result<u8, CliError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    let cfg = cfg.resolve()?;
    if args.emit_config {
        print!("{}", cfg.to_toml()?);
        return Ok(exit::PASS);
    }
    let command = match args.command {
        Cmd::Dyadic => Command::Dyadic,
        Cmd::Czd => Command::Czd,
        Cmd::KernelBounds => Command::KernelBounds,
        Cmd::Weaktype => Command::Weaktype,
    };
    let report = run(command, &cfg)?;
    let path = report.write(&cfg)?;
    let code = report.exit_code();
    let status = match code {
        exit::PASS => "pass",
        exit::NUMERICAL => "numerical failure",
        _ => "invariant failure",
    };
    println!("{}: {status} ({})", report.command, path.display());
    Ok(code)
}
