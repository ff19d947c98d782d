use std::path::PathBuf;
use std::process::ExitCode;

use chlab_cli::{run, Command, Overrides, RunConfig};
use clap::Parser;

/// Stochastic Cahn-Hilliard lab: simulation, rate minimization and
/// small-noise checks.
#[derive(Parser)]
#[command(name = "chlab", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML configuration; every key has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let overrides = Overrides { out: args.out, seed: args.seed, replicas: args.replicas, epsilon: args.epsilon };
    match config.and_then(|c| run(args.command, &c, &overrides)) {
        Ok(outcome) => {
            for a in &outcome.manifest.artifacts {
                println!("{}", outcome.dir.join(&a.name).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let invalid = e.downcast_ref::<chlab::Error>().is_some_and(|c| matches!(c, chlab::Error::Hypothesis { .. }));
            ExitCode::from(if invalid { 2 } else { 1 })
        }
    }
}
