//! `dyce` — experiment driver for the desk-scale segmentation laboratory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dyce_cli::commands;

#[derive(Parser)]
#[command(name = "dyce", version, about = "Desk-scale class-balanced segmentation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training experiment and write its artifacts.
    Train {
        /// Path to a `key = value` configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the gradient-oracle suite and report per-component errors.
    Gradcheck {
        /// Random instances per component.
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Inject a known defect to exercise the failure path.
        #[arg(long, value_parser = ["dyce-sign-flip"], hide = true)]
        inject: Option<String>,
    },
    /// Run every sweep configuration and emit one CSV row each.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Sweep file: one configuration per line as `key=value` pairs.
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate the metrics of finished runs into one CSV.
    Report {
        /// Directory holding run directories.
        #[arg(long)]
        runs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, seed } => commands::train::run(&config, seed),
        Command::Gradcheck { instances, inject } => commands::gradcheck::run(instances, inject),
        Command::Ablate { config, sweep, out } => commands::ablate::run(&config, &sweep, &out),
        Command::Report { runs, out } => commands::report::run(&runs, &out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
