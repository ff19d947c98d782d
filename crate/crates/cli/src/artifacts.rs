//! CSV and JSON writers plus the run manifest.
//!
//! Floats are printed in shortest round-trip form and JSON objects keep
//! struct declaration order, so a fixed configuration always yields the
//! same bytes.

use std::fs;
use std::path::Path;

use anyhow::Context;
use chlab::{ControlPath, Trajectory, TOL_MILD};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects artifacts in memory; nothing touches the disk until
/// [`ArtifactSet::write`].
#[derive(Default)]
pub struct ArtifactSet {
    files: Vec<(String, Vec<u8>)>,
}

impl ArtifactSet {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|f| f.0.clone()).collect()
    }

    /// Writes every artifact and the manifest into `dir`.
    pub fn write(mut self, dir: &Path, manifest: Manifest) -> anyhow::Result<Manifest> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut manifest = manifest;
        manifest.artifacts =
            self.files.iter().map(|(name, b)| ArtifactEntry { name: name.clone(), sha256: sha256_hex(b) }).collect();
        self.json(MANIFEST, &manifest)?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(manifest)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedInfo {
    pub master: u64,
    pub generator: &'static str,
    pub stream_rule: &'static str,
    pub normals: &'static str,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeInfo {
    pub name: &'static str,
    pub drift_and_control_weight: &'static str,
    pub noise_weight: &'static str,
    pub noise_transform: &'static str,
    pub tol_mild: f64,
    pub stability_constant: f64,
    pub blowup_threshold: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seeds: SeedInfo,
    pub scheme: SchemeInfo,
    /// The effective configuration, overrides applied.
    pub config: RunConfig,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> anyhow::Result<Self> {
        let solver = config.solver();
        Ok(Self {
            tool: "chlab",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256: sha256_hex(toml::to_string(config)?.as_bytes()),
            seeds: SeedInfo {
                master: config.noise.seed,
                generator: "ChaCha8 seeded from the master seed",
                stream_rule: "stream = (level << 40) | replica; level = schedule index",
                normals: "Box-Muller",
            },
            scheme: SchemeInfo {
                name: "spectral Galerkin, exponential Euler",
                drift_and_control_weight: "phi_k = (1 - exp(-lambda_k dt)) / lambda_k, phi_0 = dt",
                noise_weight: "exp(-lambda_k dt) (left endpoint)",
                noise_transform: "cell increments as point masses",
                tol_mild: TOL_MILD,
                stability_constant: solver.stability_constant,
                blowup_threshold: solver.blowup_threshold,
            },
            config: config.clone(),
            artifacts: vec![],
        })
    }
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

fn value_header(len: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((0..len).map(|j| format!("u{j}"))).collect()
}

/// One row per time step: `t`, then the grid values.
pub fn trajectory_csv(traj: &Trajectory<f64>) -> anyhow::Result<Vec<u8>> {
    csv_bytes(
        value_header(traj.grid.len()),
        traj.states.iter().enumerate().map(|(m, s)| {
            std::iter::once(traj.time(m).to_string()).chain(s.iter().map(|v| v.to_string())).collect()
        }),
    )
}

/// One row per step, `t` being the left end of the step.
pub fn control_csv(v: &ControlPath<f64>) -> anyhow::Result<String> {
    let bytes = csv_bytes(
        std::iter::once("t".to_string()).chain((0..v.grid.len()).map(|j| format!("v{j}"))).collect(),
        (0..v.steps).map(|m| {
            std::iter::once((m as f64 * v.dt).to_string()).chain(v.slice(m).iter().map(|x| x.to_string())).collect()
        }),
    )?;
    Ok(String::from_utf8(bytes)?)
}

/// Parses the layout of [`control_csv`].
pub fn parse_control_csv(text: &str, grid: chlab::Grid, dt: f64) -> anyhow::Result<ControlPath<f64>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut values = vec![];
    let mut steps = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != grid.len() + 1 {
            anyhow::bail!("control row {steps} has {} columns, expected {}", rec.len(), grid.len() + 1);
        }
        for field in rec.iter().skip(1) {
            values.push(field.trim().parse::<f64>().with_context(|| format!("control row {steps}"))?);
        }
        steps += 1;
    }
    Ok(ControlPath::new(grid, dt, steps, values)?)
}

/// Generic table with a fixed header.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<Vec<u8>> {
    csv_bytes(header.iter().map(|s| s.to_string()).collect(), rows.iter().cloned())
}
