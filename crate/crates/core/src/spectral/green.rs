//! Green kernel of `∂/∂t + Δ²` with Neumann conditions, and the space/time
//! increment integrals that control its regularity.

use serde::{Deserialize, Serialize};

use super::axis_mode;
use crate::error::{invalid, Error, Result};
use crate::stats::ols;
use crate::Scalar;

/// Truncated eigen-expansion `G_t(x, y) = Σ_{|k|∞ ≤ K} e^{−|k|⁴t} e_k(x) e_k(y)`.
///
/// The dimension is `x.len()` (1 or 2). `t = 0` is rejected: the kernel is
/// a delta distribution there.
pub fn green_kernel_eval<T: Scalar>(t: T, x: &[T], y: &[T], truncation: usize) -> Result<T> {
    if x.len() != y.len() || x.is_empty() || x.len() > 2 {
        return Err(invalid("kernel points must share dimension 1 or 2"));
    }
    if t.is_nan() || t < T::zero() {
        return Err(invalid(format!("kernel time must be positive, got {t}")));
    }
    if t == T::zero() {
        let reason = if x == y { "diagonal at t = 0" } else { "t = 0" };
        return Err(Error::NotEvaluable(format!("G_0 is a distribution ({reason})")));
    }
    let pair = |k: usize, axis: usize| axis_mode(k, x[axis]) * axis_mode(k, y[axis]);
    let mut sum = T::zero();
    if x.len() == 1 {
        // summed from high to low modes, so the O(1) mean term is added last
        for k in (0..=truncation).rev() {
            let kk = T::from_usize_lossy(k * k);
            sum = sum + (-(kk * kk) * t).exp() * pair(k, 0);
        }
    } else {
        let p1: Vec<T> = (0..=truncation).map(|k| pair(k, 1)).collect();
        for k0 in (0..=truncation).rev() {
            let p0 = pair(k0, 0);
            for k1 in (0..=truncation).rev() {
                let mu = T::from_usize_lossy(k0 * k0 + k1 * k1);
                sum = sum + (-(mu * mu) * t).exp() * p0 * p1[k1];
            }
        }
    }
    Ok(sum)
}

/// The three increment integrals for `d = 1`, with the `x` integral done by
/// exact spectral summation (Parseval) and the `r` integral by trapezoid
/// quadrature on a mesh graded towards the lower limit.
#[derive(Clone, Debug)]
pub struct IncrementIntegrals<T> {
    truncation: usize,
    nodes: usize,
    grading: T,
    lambda: Vec<T>,
}

impl<T: Scalar> IncrementIntegrals<T> {
    pub fn new(truncation: usize, nodes: usize) -> Result<Self> {
        if truncation == 0 || nodes < 2 {
            return Err(invalid("need at least one mode and two quadrature nodes"));
        }
        let lambda = (0..=truncation).map(|k| T::from_usize_lossy(k * k).powi(2)).collect();
        Ok(Self { truncation, nodes, grading: T::lit(4.0), lambda })
    }

    fn trapezoid(&self, a: T, b: T, f: impl Fn(T) -> T) -> T {
        if !(b > a) {
            return T::zero();
        }
        let n = T::from_usize_lossy(self.nodes);
        let node = |i: usize| a + (b - a) * (T::from_usize_lossy(i) / n).powf(self.grading);
        let mut prev_r = a;
        let mut prev_f = f(a);
        let mut acc = T::zero();
        for i in 1..=self.nodes {
            let r = node(i);
            let fr = f(r);
            acc = acc + (r - prev_r) * (fr + prev_f) * T::lit(0.5);
            prev_r = r;
            prev_f = fr;
        }
        acc
    }

    /// `∫₀ᵗ∫_D |G_r(x,y) − G_r(x,z)|² dx dr`.
    pub fn spatial(&self, y: T, z: T, t: T) -> T {
        let diff: Vec<T> =
            (0..=self.truncation).map(|k| (axis_mode(k, y) - axis_mode(k, z)).powi(2)).collect();
        self.trapezoid(T::zero(), t, |r| {
            self.lambda.iter().zip(&diff).rev().map(|(&l, &d)| (-T::lit(2.0) * l * r).exp() * d).sum()
        })
    }

    /// `∫₀ᵗ∫_D |G_{r+h}(x,y) − G_r(x,y)|² dx dr`.
    pub fn temporal(&self, y: T, h: T, t: T) -> T {
        let sq: Vec<T> = (0..=self.truncation).map(|k| axis_mode(k, y).powi(2)).collect();
        self.trapezoid(T::zero(), t, |r| {
            self.lambda
                .iter()
                .zip(&sq)
                .rev()
                .map(|(&l, &s)| ((-l * (r + h)).exp() - (-l * r).exp()).powi(2) * s)
                .sum()
        })
    }

    /// `∫ₛᵗ∫_D |G_r(x,y)|² dx dr`.
    pub fn square(&self, y: T, s: T, t: T) -> T {
        let sq: Vec<T> = (0..=self.truncation).map(|k| axis_mode(k, y).powi(2)).collect();
        self.trapezoid(s, t, |r| {
            self.lambda.iter().zip(&sq).rev().map(|(&l, &v)| (-T::lit(2.0) * l * r).exp() * v).sum()
        })
    }
}

/// Probe configuration for [`check_green_increments`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenProbe<T> {
    /// Upper limit `t` of the spatial and temporal integrals.
    pub horizon: T,
    /// Base point `y`.
    pub point: T,
    /// Offsets `|y − z|`.
    pub spatial_offsets: Vec<T>,
    /// Lags `h`.
    pub time_lags: Vec<T>,
    /// Lower limit `s` of the square-norm integral.
    pub window_start: T,
    /// Window lengths `t − s`.
    pub windows: Vec<T>,
    pub truncation: usize,
    pub nodes: usize,
}

impl<T: Scalar> Default for GreenProbe<T> {
    fn default() -> Self {
        let decade = |lo: f64| (0..5).map(|i| T::lit(lo * 10f64.powf(0.5 * i as f64))).collect();
        Self {
            horizon: T::lit(0.5),
            point: T::lit(1.0),
            spatial_offsets: decade(1e-3),
            time_lags: decade(1e-5),
            window_start: T::zero(),
            windows: decade(1e-5),
            truncation: 256,
            nodes: 400,
        }
    }
}

/// Log-log least-squares fit `I ≈ ĉ·inc^slope`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Smallest constant with `I(inc) ≤ ĉ·inc^slope` at every probe.
    pub constant: f64,
    pub increments: Vec<f64>,
    pub values: Vec<f64>,
}

impl ExponentFit {
    fn fit(increments: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if increments.len() < 3 {
            return Err(Error::Fit(format!("{} probe points, need at least 3", increments.len())));
        }
        if increments.iter().chain(&values).any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Fit("log-log fit needs positive increments and integrals".into()));
        }
        let lx: Vec<f64> = increments.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let (slope, intercept) = ols(&lx, &ly)?;
        let constant =
            increments.iter().zip(&values).map(|(i, v)| v / i.powf(slope)).fold(0.0, f64::max);
        Ok(Self { slope, intercept, constant, increments, values })
    }
}

/// Fitted exponents of the three increment estimates (`d = 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenIncrementReport {
    /// Spatial increments, exponent `γ̂`.
    pub spatial: ExponentFit,
    /// Time increments, exponent `γ̂'`.
    pub temporal: ExponentFit,
    /// Square norm over a window, exponent `γ̂'`.
    pub square_norm: ExponentFit,
}

impl GreenIncrementReport {
    pub fn gamma(&self) -> f64 {
        self.spatial.slope
    }

    pub fn gamma_prime(&self) -> f64 {
        self.square_norm.slope
    }
}

/// Evaluates the increment integrals on the probe sets and fits their
/// log-log slopes.
pub fn check_green_increments<T: Scalar>(probe: &GreenProbe<T>) -> Result<GreenIncrementReport> {
    let ints = IncrementIntegrals::<T>::new(probe.truncation, probe.nodes)?;
    let y = probe.point;
    let t = probe.horizon;
    let eval = |incs: &[T], f: &dyn Fn(T) -> T| -> Result<ExponentFit> {
        let values = incs.iter().map(|&i| f(i).as_f64()).collect();
        ExponentFit::fit(incs.iter().map(|i| i.as_f64()).collect(), values)
    };
    Ok(GreenIncrementReport {
        spatial: eval(&probe.spatial_offsets, &|d| ints.spatial(y, y + d, t))?,
        temporal: eval(&probe.time_lags, &|h| ints.temporal(y, h, t))?,
        square_norm: eval(&probe.windows, &|w| {
            ints.square(y, probe.window_start, probe.window_start + w)
        })?,
    })
}
