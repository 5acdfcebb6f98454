use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use periodic_fsi::driver::{self, Mode, SolverConfig};

/// Time-periodic fluid-plate solver.
#[derive(Debug, Parser)]
#[command(name = "periodic-fsi", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured run mode.
    #[arg(long)]
    mode: Option<Mode>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the randomized invariant suite.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, action = clap::ArgAction::Set)]
    deterministic: Option<bool>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match SolverConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.deterministic {
        cfg.deterministic = d;
    }
    match driver::run(&cfg) {
        Ok(report) => {
            for line in report.lines() {
                println!("{line}");
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
