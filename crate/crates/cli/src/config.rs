//! TOML run configuration.
//!
//! Every section has defaults matching the desk-scale setup (d = 1, n = 64,
//! T = 0.5, Δt = 1e-4, p = q = 4, α = 0.2, u₀ = 0.1 cos x), so an empty file
//! is a valid configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chlab::{
    solve_skeleton, ControlPath, Cubic, Error as CoreError, Grid, GridField, ModelSpec, SigmaPreset, SolverConfig,
};
use serde::{Deserialize, Serialize};

/// Hölder exponent of any `u₀` given as a finite cosine sum.
pub const U0_GAMMA: f64 = 1.0;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub grid: GridSection,
    pub exponents: Exponents,
    pub control: ControlSection,
    pub noise: NoiseSection,
    pub target: TargetSection,
    pub event: EventSection,
    pub a1: A1Section,
    pub a2: A2Section,
    pub green: GreenSection,
    pub scaling: ScalingSection,
    /// Left out of manifests and hashes: where a run is written does not
    /// change what it computes.
    #[serde(skip_serializing)]
    pub output: OutputSection,
}

/// One term `c·Π cos(kᵢxᵢ)` of a cosine sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: Vec<usize>,
    pub c: f64,
}

impl Mode {
    pub fn new(k: &[usize], c: f64) -> Self {
        Self { k: k.to_vec(), c }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `[c₃, c₂, c₁, c₀]`.
    pub drift: [f64; 4],
    pub sigma: SigmaPreset<f64>,
    pub u0: Vec<Mode>,
    /// Admits `c₃ = 0` for linear test runs.
    pub linear_test: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            drift: [4.0, 0.0, -4.0, 0.0],
            sigma: SigmaPreset::BoundedRational { s0: 1.0 },
            u0: vec![Mode::new(&[1], 0.1)],
            linear_test: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub dt: f64,
    pub final_time: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { dim: 1, n: 64, dt: 1e-4, final_time: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
}

impl Default for Exponents {
    fn default() -> Self {
        Self { p: 4.0, q: 4.0, alpha: 0.2 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSection {
    #[default]
    Zero,
    /// `v(t, x) = Σ c·Π cos(kᵢxᵢ)`, constant in time.
    Profile { modes: Vec<Mode> },
    /// Control CSV (`t, v_0, …`) or a certificate JSON.
    File { path: PathBuf },
    /// Output of `rate-min` on the `[target]` section.
    Optimizer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub epsilon: Vec<f64>,
    /// One entry for every level, or one per level.
    pub replicas: Vec<usize>,
    pub seed: u64,
    /// `simulate` also writes the replica-0 increments as little-endian f64.
    pub dump: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { epsilon: vec![0.01], replicas: vec![100], seed: 42, dump: false }
    }
}

/// Base point of a terminal ball.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterBase {
    /// Endpoint of the uncontrolled skeleton.
    #[default]
    FreeEndpoint,
    Zero,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Ball,
    #[default]
    Exterior,
    Quadratic,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub kind: TargetKind,
    pub center: CenterBase,
    /// Added to the base point.
    pub shift: Vec<Mode>,
    pub radius: f64,
    /// Quadratic weight.
    pub weight: f64,
    pub eps_ref: f64,
    pub restarts: usize,
    pub restart_scale: f64,
    pub gtol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            kind: TargetKind::Exterior,
            center: CenterBase::FreeEndpoint,
            shift: vec![],
            radius: 0.3,
            weight: 1.0,
            eps_ref: 1.0,
            restarts: 4,
            restart_scale: 0.3,
            gtol: 1e-6,
            max_iter: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKindName {
    #[default]
    TerminalBall,
    Tube,
    HolderBall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSection {
    pub kind: EventKindName,
    pub center: CenterBase,
    pub shift: Vec<Mode>,
    pub delta: f64,
    pub complement: bool,
}

impl Default for EventSection {
    fn default() -> Self {
        Self { kind: EventKindName::TerminalBall, center: CenterBase::FreeEndpoint, shift: vec![], delta: 0.3, complement: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A1Section {
    pub frequencies: Vec<usize>,
    /// Oscillation profile `g`.
    pub profile: Vec<Mode>,
    /// Radius `N` of `S^N`.
    pub radius_sq: f64,
    /// Random controls for the diameter sweep; `0` skips it.
    pub diameter_count: usize,
}

impl Default for A1Section {
    fn default() -> Self {
        Self { frequencies: vec![1, 4, 16, 64], profile: vec![Mode::new(&[0], 1.0)], radius_sq: 10.0, diameter_count: 20 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2Section {
    /// Empty: `v^ε = v`; otherwise `v^ε = v + √ε·perturbation`.
    pub perturbation: Vec<Mode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenSection {
    pub horizon: f64,
    pub point: f64,
    pub truncation: usize,
    pub nodes: usize,
}

impl Default for GreenSection {
    fn default() -> Self {
        let p = chlab::GreenProbe::<f64>::default();
        Self { horizon: p.horizon, point: p.point, truncation: p.truncation, nodes: p.nodes }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingSection {
    /// Levels `ε ≤ is_below` use importance sampling.
    pub is_below: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn hypothesis(tag: &'static str, detail: String) -> anyhow::Error {
    CoreError::Hypothesis { tag, detail }.into()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        // relative control files are resolved against the config location
        if let ControlSection::File { path: p } = &mut cfg.control {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Checks the hypotheses and the numerical settings.
    pub fn validate(&self) -> anyhow::Result<()> {
        let g = &self.grid;
        let grid = Grid::new(g.dim, g.n)?;
        if !(g.dt > 0.0) || !(g.final_time > 0.0) {
            bail!("grid: dt and final_time must be positive");
        }
        let steps = g.final_time / g.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            bail!("grid: final_time {} is not a whole number of steps of {}", g.final_time, g.dt);
        }
        for m in self.all_modes() {
            if m.k.is_empty() || m.k.len() > grid.dim || !m.c.is_finite() {
                bail!("cosine term {:?} does not fit a {}-d grid", m, grid.dim);
            }
        }
        self.model_spec()?.validate()?;
        let e = &self.exponents;
        if !(e.p >= 4.0) {
            return Err(hypothesis("(H3)", format!("u0 must lie in L^p with p >= 4, got p = {}", e.p)));
        }
        if !(e.q >= e.p) {
            bail!("moment exponent q = {} must be at least p = {}", e.q, e.p);
        }
        let ceiling = 0.5 * (1.0 - g.dim as f64 / 4.0);
        if !(e.alpha > 0.0 && e.alpha <= U0_GAMMA / 4.0 && e.alpha < ceiling) {
            return Err(hypothesis(
                "(H3')",
                format!(
                    "alpha = {} must satisfy 0 < alpha <= gamma/4 = {} and alpha < (1 - d/4)/2 = {}",
                    e.alpha,
                    U0_GAMMA / 4.0,
                    ceiling
                ),
            ));
        }
        let n = &self.noise;
        if n.epsilon.is_empty() || n.epsilon.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            bail!("noise: epsilon must be a non-empty list of positive numbers");
        }
        if n.replicas.is_empty() || n.replicas.contains(&0) {
            bail!("noise: replicas must be positive");
        }
        if n.replicas.len() != 1 && n.replicas.len() != n.epsilon.len() {
            bail!("noise: give one replica count or one per epsilon");
        }
        if !(self.event.delta >= 0.0) {
            bail!("event: delta must be non-negative");
        }
        Ok(())
    }

    fn all_modes(&self) -> impl Iterator<Item = &Mode> {
        let control: &[Mode] = match &self.control {
            ControlSection::Profile { modes } => modes,
            _ => &[],
        };
        self.model
            .u0
            .iter()
            .chain(control)
            .chain(&self.target.shift)
            .chain(&self.event.shift)
            .chain(&self.a1.profile)
            .chain(&self.a2.perturbation)
    }

    pub fn grid(&self) -> anyhow::Result<Grid> {
        Ok(Grid::new(self.grid.dim, self.grid.n)?)
    }

    pub fn steps(&self) -> usize {
        (self.grid.final_time / self.grid.dt).round() as usize
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig::new(self.grid.dt, self.steps())
    }

    pub fn field(&self, modes: &[Mode]) -> anyhow::Result<GridField<f64>> {
        Ok(cosine_sum(self.grid()?, modes))
    }

    pub fn model_spec(&self) -> anyhow::Result<ModelSpec<f64>> {
        let [c3, c2, c1, c0] = self.model.drift;
        Ok(ModelSpec {
            drift: Cubic { c3, c2, c1, c0 },
            sigma: self.model.sigma,
            u0: self.field(&self.model.u0)?,
            allow_degenerate_drift: self.model.linear_test,
        })
    }

    /// Replica count at schedule index `i`.
    pub fn replicas_at(&self, i: usize) -> usize {
        let r = &self.noise.replicas;
        if r.len() == 1 {
            r[0]
        } else {
            r[i]
        }
    }

    /// Base point plus shift.
    pub fn center(&self, base: CenterBase, shift: &[Mode]) -> anyhow::Result<GridField<f64>> {
        let grid = self.grid()?;
        let solver = self.solver().recording(self.steps());
        let b = match base {
            CenterBase::Zero => GridField::zeros(grid),
            CenterBase::FreeEndpoint => {
                let zero = ControlPath::zeros(grid, solver.dt, solver.steps);
                solve_skeleton(&zero, &self.model_spec()?, &solver)?.trajectory.last()
            }
        };
        Ok(b.add(&cosine_sum(grid, shift))?)
    }
}

pub fn cosine_sum(grid: Grid, modes: &[Mode]) -> GridField<f64> {
    GridField::from_fn(grid, |x: &[f64]| {
        modes.iter().fold(0.0, |acc, m| acc + m.c * m.k.iter().zip(x).map(|(&k, &xi)| (k as f64 * xi).cos()).product::<f64>())
    })
}
