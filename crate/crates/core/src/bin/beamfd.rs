//! `beamfd solve|study|certify|oracle --config <file>`
//!
//! Exit status: 0 when every check passes, 1 on I/O failure, 2 for a bad
//! configuration, 3 when an iteration did not converge, 4 when a check
//! failed.

use std::path::PathBuf;
use std::process::ExitCode;

use beamfd::config::{parse_config, StudyConfig};
use beamfd::harness::{
    run_certificates, run_oracle_compare, run_solve, run_study, RunOptions, Status,
};
use beamfd::Error;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "beamfd",
    version,
    about = "Beam contact solver and verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the single grid `N` and write solution.csv and report.json.
    Solve(Common),
    /// Nested refinement study over `Ns`; writes convergence.csv/json.
    Study(Common),
    /// Spectrum and contraction certificates; writes certificates.json.
    Certify(Common),
    /// Compare against the Green's-function oracle; writes oracle.json.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: bool,
    /// Worker threads for independent solves.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn load(common: &Common) -> Result<(StudyConfig, RunOptions), Error> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| Error::Io(format!("{}: {e}", common.config.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    let opts = RunOptions {
        out: cfg.out.clone(),
        svg: common.svg,
        jobs: common.jobs.max(1),
    };
    Ok((cfg, opts))
}

fn finish<T: Serialize>(result: Result<T, Error>, status: impl Fn(&T) -> Status) -> ExitCode {
    match result {
        Ok(summary) => {
            let status = status(&summary);
            match serde_json::to_string_pretty(&summary) {
                Ok(text) => println!("{text}"),
                Err(e) => eprintln!("beamfd: cannot print summary: {e}"),
            }
            match status {
                Status::Passed => ExitCode::SUCCESS,
                Status::Unconverged => {
                    eprintln!("beamfd: iteration did not converge");
                    ExitCode::from(3)
                }
                Status::CheckFailed => {
                    eprintln!("beamfd: check failed");
                    ExitCode::from(4)
                }
            }
        }
        Err(e) => {
            eprintln!("beamfd: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Solve(c) | Command::Study(c) | Command::Certify(c) | Command::Oracle(c) => c,
    };
    let (cfg, opts) = match load(common) {
        Ok(loaded) => loaded,
        Err(e) => {
            eprintln!("beamfd: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match cli.command {
        Command::Solve(_) => finish(run_solve(&cfg, &opts), |s| s.status),
        Command::Study(_) => finish(run_study(&cfg, &opts), |s| s.status),
        Command::Certify(_) => finish(run_certificates(&cfg, &opts), |s| s.status),
        Command::Oracle(_) => finish(run_oracle_compare(&cfg, &opts), |s| s.status),
    }
}
