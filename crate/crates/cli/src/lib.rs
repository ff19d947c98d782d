//! Command-line driver: one TOML configuration, one command, one output
//! directory with the artifacts and a manifest.

pub mod artifacts;
mod commands;
pub mod config;

use std::path::PathBuf;

pub use artifacts::{Manifest, MANIFEST};
pub use config::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    #[value(name = "simulate")]
    Simulate,
    #[value(name = "skeleton")]
    Skeleton,
    #[value(name = "rate-min")]
    RateMin,
    #[value(name = "mc")]
    Mc,
    #[value(name = "is")]
    Is,
    #[value(name = "verify-a1")]
    VerifyA1,
    #[value(name = "verify-a2")]
    VerifyA2,
    #[value(name = "green-check")]
    GreenCheck,
    #[value(name = "scaling-study")]
    ScalingStudy,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Skeleton => "skeleton",
            Command::RateMin => "rate-min",
            Command::Mc => "mc",
            Command::Is => "is",
            Command::VerifyA1 => "verify-a1",
            Command::VerifyA2 => "verify-a2",
            Command::GreenCheck => "green-check",
            Command::ScalingStudy => "scaling-study",
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub epsilon: Option<Vec<f64>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
        }
        if let Some(r) = self.replicas {
            cfg.noise.replicas = vec![r];
        }
        if let Some(e) = &self.epsilon {
            cfg.noise.epsilon = e.clone();
        }
    }
}

#[derive(Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Validates the configuration, runs `command` and writes its artifacts.
pub fn run(command: Command, config: &RunConfig, overrides: &Overrides) -> anyhow::Result<Outcome> {
    let mut cfg = config.clone();
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let files = commands::execute(command, &cfg)?;
    let dir = cfg.output.dir.clone();
    let manifest = files.write(&dir, Manifest::new(command.name(), &cfg)?)?;
    Ok(Outcome { dir, manifest })
}
