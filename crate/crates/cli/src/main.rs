//! `himnet`: data generation, training, hybrid solves and analysis.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 solve did not
//! converge, 3 internal failure.

mod commands;
mod config;
mod problem;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::UsageError;

#[derive(Parser)]
#[command(name = "himnet", version, about = "Hybrid iterative solvers with operator-network correctors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration entry, e.g. `--set solver.m=20`. Repeatable.
    #[arg(short, long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample coefficient/source pairs and solve them on a fine grid.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n_records: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a network on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Solve one problem with the hybrid iteration.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Correction period.
        #[arg(short, long)]
        m: Option<usize>,
        #[arg(long)]
        compare_plain: bool,
    },
    /// Solve one problem for a list of correction periods.
    SweepM {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence-rate curves, smoothing factors, error spectra.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn quote(p: &std::path::Path) -> String {
    format!("{:?}", p.display().to_string())
}

fn push<T: ToString>(set: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        set.push(format!("{key}={}", v.to_string()));
    }
}

fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::GenData { common, out, n_records, seed } => {
            let mut set = common.set;
            push(&mut set, "out", out.as_deref().map(quote));
            push(&mut set, "n_records", n_records);
            push(&mut set, "seed", seed);
            commands::gen_data(&config::load(common.config.as_deref(), &set)?)
        }
        Command::Train { common, data, out, epochs, resume } => {
            let mut set = common.set;
            push(&mut set, "data", data.as_deref().map(quote));
            push(&mut set, "out", out.as_deref().map(quote));
            push(&mut set, "options.epochs", epochs);
            push(&mut set, "resume", resume.as_deref().map(quote));
            commands::train_cmd(&config::load(common.config.as_deref(), &set)?)
        }
        Command::Solve { common, m, compare_plain } => {
            let mut set = common.set;
            push(&mut set, "solver.m", m);
            if compare_plain {
                set.push("compare_plain=true".into());
            }
            commands::solve(&config::load(common.config.as_deref(), &set)?)
        }
        Command::SweepM { common, out } => {
            let mut set = common.set;
            push(&mut set, "out", out.as_deref().map(quote));
            commands::sweep(&config::load(common.config.as_deref(), &set)?)
        }
        Command::Analyze { common, out_dir } => {
            let mut set = common.set;
            push(&mut set, "out_dir", out_dir.as_deref().map(quote));
            commands::analyze(&config::load(common.config.as_deref(), &set)?)
        }
    }
}

/// 1 for bad input, 3 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(err) = cause.downcast_ref::<himnet::Error>() {
            use himnet::Error::*;
            return match err {
                Dimension(_) | InvalidArgument(_) | InvalidCoefficient { .. } | OutsideDomain(_) | Format(_) | Io(_) | Json(_) => 1,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
