//! `kkl`: design, simulate, compare and verify KKL observers from a JSON
//! config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Options;
use crate::config::ConfigError;

#[derive(Parser)]
#[command(name = "kkl", version, about = "KKL observer design and simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the filter and transform, write design.json with diagnostics.
    Design(Common),
    /// Run plant and observer, write trajectory.csv and summary.json.
    Simulate(Common),
    /// Run the continuous- and discrete-coefficient observers side by side.
    Compare(Common),
    /// Check the design's invariants, write verify.json.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; the built-in oscillator experiment when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set run.K=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for sampling (falls back to the config, then KKL_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Accept designs whose injectivity margin triggers a warning.
    #[arg(long)]
    allow_weak: bool,
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    let (cmd, common) = match cli.command {
        Command::Design(c) => (commands::design as fn(_, _) -> _, c),
        Command::Simulate(c) => (commands::simulate_cmd as fn(_, _) -> _, c),
        Command::Compare(c) => (commands::compare as fn(_, _) -> _, c),
        Command::Verify(c) => (commands::verify as fn(_, _) -> _, c),
    };
    let cfg = config::load(common.config.as_deref(), &common.set)?;
    let opts = Options {
        out: common.out,
        seed: common.seed,
        allow_weak: common.allow_weak,
    };
    cmd(&cfg, &opts)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
