//! Brownian-sheet increments and the Cameron–Martin shift.
//!
//! # Seed derivation (`chacha8-stream-v1`)
//!
//! A [`SeedSpec`] `(master, level, replica)` selects the ChaCha8 generator
//! keyed by `ChaCha8Rng::seed_from_u64(master)` on stream
//! `(level << 40) | replica`. Distinct `(level, replica)` pairs with
//! `replica < 2^40` therefore read disjoint keystreams. Each pair of `u64`
//! outputs `(a, b)` becomes two standard normals by Box–Muller with
//! `u₁ = ((a >> 11) + 1)·2^{-53}` and `u₂ = (b >> 11)·2^{-53}`:
//! `r = √(−2 ln u₁)`, `z₀ = r cos 2πu₂`, `z₁ = r sin 2πu₂`, evaluated with
//! the portable `libm` routines. The draws fill the increments in row-major
//! `(step, cell)` order and are scaled by `√(Δt·h)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::fields::{control_norm_sq, ControlPath, Grid};
use crate::Scalar;

const REPLICA_BITS: u32 = 40;

/// Identifier of the seed-derivation rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedRule {
    #[default]
    #[serde(rename = "chacha8-stream-v1")]
    ChaCha8StreamV1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    /// Experiment level, e.g. the index of `ε` in a schedule.
    pub level: u32,
    pub replica: u64,
    pub rule: SeedRule,
}

impl SeedSpec {
    pub fn new(master: u64, replica: u64) -> Self {
        Self::at_level(master, 0, replica)
    }

    pub fn at_level(master: u64, level: u32, replica: u64) -> Self {
        assert!(replica < 1 << REPLICA_BITS, "replica index exceeds 2^40");
        assert!(level < 1 << (64 - REPLICA_BITS), "level exceeds 2^24");
        Self { master, level, replica, rule: SeedRule::ChaCha8StreamV1 }
    }

    pub fn stream(&self) -> u64 {
        (u64::from(self.level) << REPLICA_BITS) | self.replica
    }

    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream());
        rng
    }

    /// Standard normal draws, `count` of them, per the documented rule.
    pub fn normals(&self, count: usize) -> Vec<f64> {
        let mut rng = self.rng();
        let mut out = Vec::with_capacity(count + 1);
        while out.len() < count {
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * TWO_POW_M53;
            let u2 = (rng.next_u64() >> 11) as f64 * TWO_POW_M53;
            let r = libm::sqrt(-2.0 * libm::log(u1));
            let theta = 2.0 * std::f64::consts::PI * u2;
            out.push(r * libm::cos(theta));
            out.push(r * libm::sin(theta));
        }
        out.truncate(count);
        out
    }
}

const TWO_POW_M53: f64 = 1.0 / 9_007_199_254_740_992.0;

/// Time-space layout of a sheet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SheetConfig<T> {
    pub grid: Grid,
    pub steps: usize,
    pub dt: T,
}

/// Cell increments `ΔW_{m,j}` of the Brownian sheet, `m < M`, `j < n^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePath<T> {
    pub grid: Grid,
    pub dt: T,
    pub steps: usize,
    pub increments: Vec<T>,
}

impl<T: Scalar> NoisePath<T> {
    pub fn zeros(grid: Grid, dt: T, steps: usize) -> Self {
        Self { grid, dt, steps, increments: vec![T::zero(); steps * grid.len()] }
    }

    pub fn slice(&self, m: usize) -> &[T] {
        let len = self.grid.len();
        &self.increments[m * len..(m + 1) * len]
    }

    /// Variance `Δt·h` of a single increment.
    pub fn cell_variance(&self) -> T {
        self.dt * self.grid.cell_volume::<T>()
    }

    /// Sums blocks of `factor` consecutive steps, giving the same sheet on
    /// the grid with step `factor·Δt`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(invalid(format!("cannot coarsen {} steps by {factor}", self.steps)));
        }
        let len = self.grid.len();
        let steps = self.steps / factor;
        let mut increments = vec![T::zero(); steps * len];
        for m in 0..self.steps {
            let dst = &mut increments[(m / factor) * len..(m / factor + 1) * len];
            dst.iter_mut().zip(self.slice(m)).for_each(|(d, &s)| *d = *d + s);
        }
        Ok(Self { grid: self.grid, dt: self.dt * T::from_usize_lossy(factor), steps, increments })
    }

    /// Raw dump: increments as little-endian IEEE-754 doubles, row-major.
    pub fn write_le_f64(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for v in &self.increments {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    fn check_control(&self, v: &ControlPath<T>) -> Result<()> {
        if self.grid != v.grid || self.steps != v.steps || self.dt != v.dt {
            return Err(shape(format!(
                "noise ({:?}, {} steps) vs control ({:?}, {} steps)",
                self.grid, self.steps, v.grid, v.steps
            )));
        }
        Ok(())
    }
}

/// Draws i.i.d. `N(0, Δt·h)` cell increments.
pub fn sample_sheet<T: Scalar>(config: &SheetConfig<T>, seed: &SeedSpec) -> Result<NoisePath<T>> {
    if config.steps == 0 || config.grid.is_empty() {
        return Err(invalid("zero-size noise sheet"));
    }
    if !(config.dt > T::zero()) {
        return Err(invalid("noise time step must be positive"));
    }
    let scale = (config.dt.as_f64() * config.grid.cell_volume::<f64>()).sqrt();
    let increments =
        seed.normals(config.steps * config.grid.len()).into_iter().map(|z| T::lit(z * scale)).collect();
    Ok(NoisePath { grid: config.grid, dt: config.dt, steps: config.steps, increments })
}

/// Increments of `√ε W + ℐ(v)`: `√ε ΔW_{m,j} + Δt·h·v_{m,j}`.
pub fn shift_increments<T: Scalar>(w: &NoisePath<T>, v: &ControlPath<T>, eps: T) -> Result<NoisePath<T>> {
    w.check_control(v)?;
    if eps.is_nan() || eps < T::zero() {
        return Err(invalid(format!("noise scale must be non-negative, got {eps}")));
    }
    let root = eps.sqrt();
    let cell = w.cell_variance();
    let increments =
        w.increments.iter().zip(&v.values).map(|(&dw, &vv)| root * dw + cell * vv).collect();
    Ok(NoisePath { grid: w.grid, dt: w.dt, steps: w.steps, increments })
}

/// `log dQ/dP = −ε^{-1/2} Σ v ΔW − (2ε)^{-1} ‖v‖²`.
pub fn girsanov_log_weight<T: Scalar>(w: &NoisePath<T>, v: &ControlPath<T>, eps: T) -> Result<T> {
    w.check_control(v)?;
    if !(eps > T::zero()) {
        return Err(invalid(format!("Girsanov weight needs ε > 0, got {eps}")));
    }
    let cross: T = w.increments.iter().zip(&v.values).map(|(&dw, &vv)| vv * dw).sum();
    Ok(-cross / eps.sqrt() - control_norm_sq(v) / (T::lit(2.0) * eps))
}
