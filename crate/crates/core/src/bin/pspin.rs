use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use pspin::cli::{self, Command, Overrides};

/// Limit dynamics, FDT constants and conditioned Langevin runs for spherical
/// mixed p-spin models.
#[derive(Debug, Parser)]
#[command(name = "pspin", version)]
struct Args {
    /// What to compute.
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Size of the worker pool.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(outcome) => {
            for m in &outcome.messages {
                eprintln!("{m}");
            }
            println!("wrote {} files to {}", outcome.files.len(), args.out.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(cli::EXIT_ERROR as u8)
        }
    }
}

fn execute(args: &Args) -> anyhow::Result<cli::Outcome> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    let cfg = cli::parse_config(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let ov = Overrides { seed: args.seed, threads: args.threads };
    cli::run(args.command, &cfg, &args.out, ov).with_context(|| format!("running {}", args.command.name()))
}
