//! `swflow`: experiment driver for sliced-Wasserstein particle dynamics.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "swflow", version, about = "Sliced-Wasserstein gradient flows of point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-step gradient descent with a monitored trace.
    Descend(Common),
    /// Energy along a perturbation path (vector field, split translation or kink scan).
    Perturb(Common),
    /// Per-particle criticality residuals of a cloud.
    Criticality(Common),
    /// Energy-vs-iteration table for several step sizes.
    Sweep(Common),
    /// Quadratic cell of the fixed-direction estimator around a cloud.
    Cells(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "SWFLOW_THREADS")]
    threads: Option<usize>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (fn(_, _, _) -> _, &Common) = match &cli.command {
        Command::Descend(c) => (commands::descend, c),
        Command::Perturb(c) => (commands::perturb, c),
        Command::Criticality(c) => (commands::criticality, c),
        Command::Sweep(c) => (commands::sweep, c),
        Command::Cells(c) => (commands::cells, c),
    };
    if let Some(k) = common.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&common.config, &common.out, common.seed) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.exit_code())
        }
    }
}
