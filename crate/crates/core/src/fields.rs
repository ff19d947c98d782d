//! Grid fields, trajectories and controls on `D = [0, π]^d`, together with
//! the `L^p`, space-time `L²` and Hölder-in-time norms used throughout.
//!
//! All quadratures are midpoint rules on the collocation grid
//! `x_j = (j + ½)·π/n`, so that the discrete `L²` norm coincides with the
//! Euclidean norm of the cosine coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::noise::SeedSpec;
use crate::Scalar;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// Tensor-product midpoint grid with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(invalid(format!("dimension {dim} not in 1..={MAX_DIM}")));
        }
        if n == 0 {
            return Err(invalid("zero-size grid"));
        }
        Ok(Self { dim, n })
    }

    /// One-dimensional grid, the default desk-scale setting.
    pub fn line(n: usize) -> Self {
        Self { dim: 1, n }
    }

    /// Number of collocation points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing<T: Scalar>(&self) -> T {
        T::PI() / T::from_usize_lossy(self.n)
    }

    /// Cell volume `h = (π/n)^d`.
    pub fn cell_volume<T: Scalar>(&self) -> T {
        self.spacing::<T>().powi(self.dim as i32)
    }

    /// Coordinate of the `i`-th midpoint along one axis.
    pub fn axis_point<T: Scalar>(&self, i: usize) -> T {
        (T::from_usize_lossy(i) + T::lit(0.5)) * self.spacing::<T>()
    }

    /// Row-major multi-index of flat index `j`; unused axes are zero.
    pub fn unravel(&self, mut j: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            idx[axis] = j % self.n;
            j /= self.n;
        }
        idx
    }

    pub fn point<T: Scalar>(&self, j: usize) -> [T; MAX_DIM] {
        let idx = self.unravel(j);
        let mut x = [T::zero(); MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.axis_point(idx[axis]);
        }
        x
    }

    /// Lebesgue measure of the domain, `π^d`.
    pub fn domain_volume<T: Scalar>(&self) -> T {
        T::PI().powi(self.dim as i32)
    }
}

/// Values of a function at the collocation points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField<T> {
    pub grid: Grid,
    pub values: Vec<T>,
}

impl<T: Scalar> GridField<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(shape(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field contains non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![T::zero(); grid.len()] }
    }

    pub fn constant(grid: Grid, c: T) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f` at the collocation points.
    pub fn from_fn(grid: Grid, f: impl Fn(&[T]) -> T) -> Self {
        let values = (0..grid.len())
            .map(|j| {
                let x = grid.point::<T>(j);
                f(&x[..grid.dim])
            })
            .collect();
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spatial mean `|D|^{-1} ∫ u`.
    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize_lossy(self.len())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a - b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn scale(&self, c: T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&a| a * c).collect() }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&a| f(a)).collect() }
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(shape(format!("grid {:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }
}

/// Provenance attached to a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub epsilon: f64,
    pub seed: Option<SeedSpec>,
    pub control_id: Option<String>,
}

/// Fields `u(t_m, ·)` on the uniform time grid `t_m = m·dt`, `m = 0..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub grid: Grid,
    pub dt: T,
    pub states: Vec<Vec<T>>,
    pub meta: TrajectoryMeta,
}

impl<T: Scalar> Trajectory<T> {
    pub fn new(grid: Grid, dt: T, states: Vec<Vec<T>>, meta: TrajectoryMeta) -> Result<Self> {
        if states.is_empty() {
            return Err(invalid("trajectory needs at least one time point"));
        }
        if !(dt > T::zero()) {
            return Err(invalid("trajectory time step must be positive"));
        }
        if let Some(bad) = states.iter().position(|s| s.len() != grid.len()) {
            return Err(shape(format!("state {bad} does not match grid")));
        }
        Ok(Self { grid, dt, states, meta })
    }

    /// Trajectory constant in time.
    pub fn constant(field: &GridField<T>, dt: T, steps: usize) -> Self {
        Self {
            grid: field.grid,
            dt,
            states: vec![field.values.clone(); steps + 1],
            meta: TrajectoryMeta::default(),
        }
    }

    /// Number of time steps `M` (one less than the number of stored fields).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, m: usize) -> T {
        T::from_usize_lossy(m) * self.dt
    }

    pub fn final_time(&self) -> T {
        self.time(self.steps())
    }

    pub fn field(&self, m: usize) -> GridField<T> {
        GridField { grid: self.grid, values: self.states[m].clone() }
    }

    pub fn last(&self) -> GridField<T> {
        self.field(self.steps())
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.grid == other.grid && self.dt == other.dt && self.states.len() == other.states.len()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(shape("trajectories live on different grids"));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x - y).collect())
            .collect();
        Ok(Self { grid: self.grid, dt: self.dt, states, meta: TrajectoryMeta::default() })
    }

    /// `sup_m ‖u(t_m)‖_p`.
    pub fn sup_norm(&self, p: T) -> Result<T> {
        let h = self.grid.cell_volume::<T>();
        let pw = Power::new(p)?;
        Ok(self.states.iter().map(|s| pw.norm(s.iter().copied(), h)).fold(T::zero(), T::max))
    }
}

/// Control `v(t, x)` on the time-space grid, constant on each step interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath<T> {
    pub grid: Grid,
    pub dt: T,
    pub steps: usize,
    /// `values[m·len + j] = v(t_m, x_j)` for `m < steps`.
    pub values: Vec<T>,
    /// Radius² `N` of the ball `S^N` the control is tagged with, if any.
    pub bound: Option<T>,
}

impl<T: Scalar> ControlPath<T> {
    pub fn new(grid: Grid, dt: T, steps: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != steps * grid.len() {
            return Err(shape(format!(
                "control has {} values, expected {}",
                values.len(),
                steps * grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control contains non-finite values"));
        }
        Ok(Self { grid, dt, steps, values, bound: None })
    }

    pub fn zeros(grid: Grid, dt: T, steps: usize) -> Self {
        Self { grid, dt, steps, values: vec![T::zero(); steps * grid.len()], bound: None }
    }

    /// Samples `f(t, x)` at the left end of every step.
    pub fn from_fn(grid: Grid, dt: T, steps: usize, f: impl Fn(T, &[T]) -> T) -> Self {
        let len = grid.len();
        let points: Vec<_> = (0..len).map(|j| grid.point::<T>(j)).collect();
        let mut values = Vec::with_capacity(steps * len);
        for m in 0..steps {
            let t = T::from_usize_lossy(m) * dt;
            values.extend(points.iter().map(|x| f(t, &x[..grid.dim])));
        }
        Self { grid, dt, steps, values, bound: None }
    }

    pub fn with_bound(mut self, bound: T) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn slice(&self, m: usize) -> &[T] {
        let len = self.grid.len();
        &self.values[m * len..(m + 1) * len]
    }

    pub fn final_time(&self) -> T {
        T::from_usize_lossy(self.steps) * self.dt
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.grid == other.grid && self.dt == other.dt && self.steps == other.steps
    }

    pub fn scale(&self, c: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v * c);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_layout(other) {
            return Err(shape("controls live on different grids"));
        }
        let mut out = self.clone();
        out.values.iter_mut().zip(&other.values).for_each(|(a, &b)| *a = *a + b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-T::one()))
    }

    /// Quadrature inner product `Δt·h·Σ v w`.
    pub fn dot(&self, other: &Self) -> Result<T> {
        if !self.same_layout(other) {
            return Err(shape("controls live on different grids"));
        }
        let w = self.dt * self.grid.cell_volume::<T>();
        Ok(w * self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum::<T>())
    }

    /// Whether `‖v‖² ≤ N` for the given radius², or for the tagged bound.
    pub fn in_ball(&self, radius_sq: Option<T>) -> bool {
        match radius_sq.or(self.bound) {
            Some(n) => control_norm_sq(self) <= n,
            None => true,
        }
    }
}

/// `p`-th power helper that avoids `powf` for the common integer exponents.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Power<T> {
    One,
    Two,
    Four,
    General(T),
    Infinite,
}

impl<T: Scalar> Power<T> {
    pub(crate) fn new(p: T) -> Result<Self> {
        if p.is_nan() || p < T::one() {
            return Err(invalid(format!("L^p exponent must satisfy p >= 1, got {p}")));
        }
        Ok(if p.is_infinite() {
            Power::Infinite
        } else if p == T::one() {
            Power::One
        } else if p == T::lit(2.0) {
            Power::Two
        } else if p == T::lit(4.0) {
            Power::Four
        } else {
            Power::General(p)
        })
    }

    #[inline]
    fn pow(self, x: T) -> T {
        let a = x.abs();
        match self {
            Power::One | Power::Infinite => a,
            Power::Two => a * a,
            Power::Four => {
                let s = a * a;
                s * s
            }
            Power::General(p) => a.powf(p),
        }
    }

    #[inline]
    fn root(self, s: T) -> T {
        match self {
            Power::One | Power::Infinite => s,
            Power::Two => s.sqrt(),
            Power::Four => s.sqrt().sqrt(),
            Power::General(p) => s.powf(p.recip()),
        }
    }

    /// `(h Σ |x_j|^p)^{1/p}`, or `max |x_j|` for `p = ∞`.
    pub(crate) fn norm(self, xs: impl Iterator<Item = T>, h: T) -> T {
        match self {
            Power::Infinite => xs.fold(T::zero(), |m, x| m.max(x.abs())),
            _ => self.root(h * xs.map(|x| self.pow(x)).sum::<T>()),
        }
    }
}

/// `‖g‖_p = (h Σ_j |u_j|^p)^{1/p}` with `h = (π/n)^d`.
pub fn lp_norm<T: Scalar>(g: &GridField<T>, p: T) -> Result<T> {
    let pw = Power::new(p)?;
    Ok(pw.norm(g.values.iter().copied(), g.grid.cell_volume()))
}

/// Norm of the difference of two raw grid slices.
pub(crate) fn lp_diff<T: Scalar>(a: &[T], b: &[T], h: T, pw: Power<T>) -> T {
    pw.norm(a.iter().zip(b).map(|(&x, &y)| x - y), h)
}

/// Parts of the Hölder norm `‖u‖_{α,p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderNorm<T> {
    /// `sup_t ‖u(t)‖_p`.
    pub sup_term: T,
    /// `sup_{t≠t'} ‖u(t) − u(t')‖_p / |t − t'|^α`.
    pub increment_term: T,
    /// Set when the trajectory has a single time point and the increment
    /// term is undefined (reported as zero).
    pub single_time: bool,
}

impl<T: Scalar> HolderNorm<T> {
    pub fn value(&self) -> T {
        self.sup_term + self.increment_term
    }
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(invalid(format!("Hölder exponent must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Largest `α`-increment quotient over pairs whose lag is at most
/// `max_lag` steps.
fn increment_sup<T: Scalar>(traj: &Trajectory<T>, alpha: T, pw: Power<T>, max_lag: usize) -> T {
    let h = traj.grid.cell_volume::<T>();
    let steps = traj.steps();
    let mut best = T::zero();
    for lag in 1..=max_lag.min(steps) {
        let denom = (T::from_usize_lossy(lag) * traj.dt).powf(alpha);
        for i in 0..=steps - lag {
            let q = lp_diff(&traj.states[i + lag], &traj.states[i], h, pw) / denom;
            if q > best {
                best = q;
            }
        }
    }
    best
}

/// Hölder norm `sup_t ‖u(t)‖_p + sup_{t≠t'} ‖u(t)−u(t')‖_p/|t−t'|^α`,
/// exact over all pairs of grid times.
pub fn holder_norm<T: Scalar>(traj: &Trajectory<T>, alpha: T, p: T) -> Result<HolderNorm<T>> {
    check_alpha(alpha)?;
    let pw = Power::new(p)?;
    let sup_term = traj.sup_norm(p)?;
    if traj.steps() == 0 {
        return Ok(HolderNorm { sup_term, increment_term: T::zero(), single_time: true });
    }
    let increment_term = increment_sup(traj, alpha, pw, traj.steps());
    Ok(HolderNorm { sup_term, increment_term, single_time: false })
}

/// Modulus `sup_{0<|t−t'|≤δ} ‖u(t)−u(t')‖_p/|t−t'|^{α'}` over grid times.
///
/// The window is closed, so `δ = T` reproduces the increment term of
/// [`holder_norm`].
pub fn holder_modulus<T: Scalar>(traj: &Trajectory<T>, alpha: T, p: T, delta: T) -> Result<T> {
    check_alpha(alpha)?;
    let pw = Power::new(p)?;
    if !(delta > traj.dt) {
        return Err(invalid(format!(
            "window δ = {delta} admits no pairs beyond the time step {}",
            traj.dt
        )));
    }
    let max_lag = (delta / traj.dt + T::lit(1e-9)).floor().to_usize().unwrap_or(usize::MAX);
    Ok(increment_sup(traj, alpha, pw, max_lag))
}

/// Space-time cost `∫₀ᵀ∫_D v² = Δt·h·Σ v²`.
pub fn control_norm_sq<T: Scalar>(v: &ControlPath<T>) -> T {
    v.dt * v.grid.cell_volume::<T>() * v.values.iter().map(|&x| x * x).sum::<T>()
}
