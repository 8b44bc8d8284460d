use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_bootstrap::harness::{run, Command, ExperimentConfig};
use hybrid_bootstrap::Error;

/// Hybrid block bootstrap experiments.
#[derive(Parser)]
#[command(name = "hbb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the subcommand named by the config's `command` key.
    Run(Common),
    /// Simulate a reference probability.
    Reference(Common),
    /// MSE of the bootstrap distribution estimator over a (b, ell) grid.
    MseGrid(Common),
    /// Coverage of lower percentile confidence limits over a grid.
    CoverageGrid(Common),
    /// MSE of the CDF-level estimator over a grid.
    CdfMseGrid(Common),
    /// Repeated empirical selection of (b, ell).
    Tune(Common),
    /// Grid-minimum MSE across sample sizes and its log-log slope.
    RateStudy(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `workers`.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (overrides `output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (explicit, common) = match cli.command {
        Cmd::Run(c) => (None, c),
        Cmd::Reference(c) => (Some(Command::Reference), c),
        Cmd::MseGrid(c) => (Some(Command::MseGrid), c),
        Cmd::CoverageGrid(c) => (Some(Command::CoverageGrid), c),
        Cmd::CdfMseGrid(c) => (Some(Command::CdfMseGrid), c),
        Cmd::Tune(c) => (Some(Command::Tune), c),
        Cmd::RateStudy(c) => (Some(Command::RateStudy), c),
    };
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    let command = match explicit.or(cfg.command) {
        Some(c) => c,
        None => {
            return Err(Error::Config {
                key: "command".into(),
                message: "missing required key for `hbb run`".into(),
            })
        }
    };
    let out = common
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("hbb-out"));
    let report = run(&cfg, command, &out)?;
    for f in report.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::InvalidArgument(_) => 2,
                Error::ResourceLimit(_) => 3,
                _ => 1,
            })
        }
    }
}
