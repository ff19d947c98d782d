//! Neumann cosine eigenbasis on `[0, π]^d`.
//!
//! The orthonormal basis is `e_0 = π^{-d/2}` and
//! `e_k(x) = Π_i c_{k_i}(x_i)` with `c_0 = π^{-1/2}`,
//! `c_k(x) = (2/π)^{1/2} cos(k x)`. Every mode satisfies
//! `∂u/∂ν = ∂Δu/∂ν = 0`, `Δ e_k = −|k|² e_k` and `Δ² e_k = |k|⁴ e_k`, so the
//! Green semigroup of `∂/∂t + Δ²` is diagonal with factors `e^{−|k|⁴ t}`.
//!
//! On the midpoint grid `x_j = (j+½)π/n` the analysis map
//! `a_k = h Σ_j e_k(x_j) g_j` and the synthesis map `g_j = Σ_k a_k e_k(x_j)`
//! are exact inverses (discrete cosine orthogonality), which makes the
//! midpoint `L²` norm equal to the Euclidean norm of the coefficients.

mod green;

pub use green::{
    check_green_increments, green_kernel_eval, ExponentFit, GreenIncrementReport, GreenProbe,
    IncrementIntegrals,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::fields::{Grid, GridField, MAX_DIM};
use crate::Scalar;

/// Spectral data of one basis function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisIndex<T> {
    /// Multi-index; entries beyond the dimension are zero.
    pub k: [usize; MAX_DIM],
    /// Laplacian eigenvalue `|k|²`.
    pub mu: T,
    /// Biharmonic eigenvalue `|k|⁴ = mu²`.
    pub lambda: T,
}

impl<T: Scalar> BasisIndex<T> {
    pub fn new(k: [usize; MAX_DIM]) -> Self {
        let mu = k.iter().map(|&ki| T::from_usize_lossy(ki * ki)).sum::<T>();
        Self { k, mu, lambda: mu * mu }
    }
}

/// Coefficients `a_k` of a field in the cosine basis, row-major in `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField<T> {
    pub grid: Grid,
    pub coeffs: Vec<T>,
}

impl<T: Scalar> SpectralField<T> {
    pub fn new(grid: Grid, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(shape(format!(
                "{} coefficients for a grid of {} points",
                coeffs.len(),
                grid.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite spectral coefficient"));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, coeffs: vec![T::zero(); grid.len()] }
    }

    /// Field with a single unit coefficient at multi-index `k`.
    pub fn mode(grid: Grid, k: [usize; MAX_DIM], amplitude: T) -> Self {
        let mut out = Self::zeros(grid);
        out.coeffs[flat_index(grid, k)] = amplitude;
        out
    }

    pub fn index(&self, flat: usize) -> BasisIndex<T> {
        BasisIndex::new(self.grid.unravel(flat))
    }

    pub fn coeff(&self, k: [usize; MAX_DIM]) -> T {
        self.coeffs[flat_index(self.grid, k)]
    }

    /// Green semigroup: `a_k ↦ e^{−λ_k t} a_k`.
    pub fn semigroup_apply(&self, t: T) -> Result<Self> {
        if t.is_nan() || t < T::zero() {
            return Err(invalid(format!("semigroup time must be non-negative, got {t}")));
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let lambda = self.index(i).lambda;
                if lambda == T::zero() {
                    a
                } else {
                    (-lambda * t).exp() * a
                }
            })
            .collect();
        Ok(Self { grid: self.grid, coeffs })
    }

    /// Laplacian: `a_k ↦ −μ_k a_k`.
    pub fn laplacian_apply(&self) -> Self {
        let coeffs =
            self.coeffs.iter().enumerate().map(|(i, &a)| -self.index(i).mu * a).collect();
        Self { grid: self.grid, coeffs }
    }

    /// `(Σ a_k²)^{1/2}`, equal to the midpoint `L²` norm of the synthesis.
    pub fn l2_norm(&self) -> T {
        self.coeffs.iter().map(|&a| a * a).sum::<T>().sqrt()
    }
}

pub(crate) fn flat_index(grid: Grid, k: [usize; MAX_DIM]) -> usize {
    (0..grid.dim).fold(0, |acc, axis| acc * grid.n + k[axis])
}

/// One-dimensional normalized cosine `c_k(x)`.
pub fn axis_mode<T: Scalar>(k: usize, x: T) -> T {
    if k == 0 {
        T::PI().sqrt().recip()
    } else {
        (T::lit(2.0) / T::PI()).sqrt() * (T::from_usize_lossy(k) * x).cos()
    }
}

/// Tensor-product basis function `e_k(x)`.
pub fn basis_eval<T: Scalar>(k: &[usize], x: &[T]) -> T {
    k.iter().zip(x).map(|(&ki, &xi)| axis_mode(ki, xi)).fold(T::one(), |p, v| p * v)
}

/// Precomputed transform matrices and eigenvalues for one grid.
///
/// Transforms are direct matrix products along each axis, `O(n^{d+1})`.
#[derive(Clone, Debug)]
pub struct CosineBasis<T> {
    grid: Grid,
    /// `analysis[k·n + j] = c_k(x_j)`.
    analysis: Vec<T>,
    /// `synthesis[j·n + k] = c_k(x_j)`.
    synthesis: Vec<T>,
    mu: Vec<T>,
    lambda: Vec<T>,
    cell: T,
}

impl<T: Scalar> CosineBasis<T> {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n;
        let mut analysis = vec![T::zero(); n * n];
        let mut synthesis = vec![T::zero(); n * n];
        for k in 0..n {
            for j in 0..n {
                let v = axis_mode(k, grid.axis_point::<T>(j));
                analysis[k * n + j] = v;
                synthesis[j * n + k] = v;
            }
        }
        let (mu, lambda) = (0..grid.len())
            .map(|i| {
                let b = BasisIndex::<T>::new(grid.unravel(i));
                (b.mu, b.lambda)
            })
            .unzip();
        Self { grid, analysis, synthesis, mu, lambda, cell: grid.cell_volume() }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Laplacian eigenvalues `μ_k`, flat order.
    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    /// Biharmonic eigenvalues `λ_k`, flat order.
    pub fn lambda(&self) -> &[T] {
        &self.lambda
    }

    pub fn cell_volume(&self) -> T {
        self.cell
    }

    pub fn index(&self, flat: usize) -> BasisIndex<T> {
        BasisIndex { k: self.grid.unravel(flat), mu: self.mu[flat], lambda: self.lambda[flat] }
    }

    /// `out_k = Σ_j e_k(x_j) g_j` (analysis without the quadrature weight).
    pub fn project_sum(&self, values: &[T], out: &mut [T]) {
        self.apply(values, out, &self.analysis);
    }

    /// `out_k = h Σ_j e_k(x_j) g_j`.
    pub fn analyze(&self, values: &[T], out: &mut [T]) {
        self.project_sum(values, out);
        let h = self.cell;
        out.iter_mut().for_each(|a| *a = *a * h);
    }

    /// `out_j = Σ_k a_k e_k(x_j)`.
    pub fn synthesize(&self, coeffs: &[T], out: &mut [T]) {
        self.apply(coeffs, out, &self.synthesis);
    }

    pub fn to_spectral(&self, g: &GridField<T>) -> Result<SpectralField<T>> {
        if g.grid != self.grid {
            return Err(shape(format!("field grid {:?} vs basis grid {:?}", g.grid, self.grid)));
        }
        let mut coeffs = vec![T::zero(); self.grid.len()];
        self.analyze(&g.values, &mut coeffs);
        Ok(SpectralField { grid: self.grid, coeffs })
    }

    pub fn from_spectral(&self, a: &SpectralField<T>) -> Result<GridField<T>> {
        if a.grid != self.grid {
            return Err(shape(format!("field grid {:?} vs basis grid {:?}", a.grid, self.grid)));
        }
        let mut values = vec![T::zero(); self.grid.len()];
        self.synthesize(&a.coeffs, &mut values);
        Ok(GridField { grid: self.grid, values })
    }

    fn apply(&self, input: &[T], out: &mut [T], mat: &[T]) {
        let n = self.grid.n;
        debug_assert_eq!(input.len(), self.grid.len());
        debug_assert_eq!(out.len(), self.grid.len());
        match self.grid.dim {
            1 => matvec(mat, n, input, out),
            _ => {
                let mut buf = input.to_vec();
                for axis in 0..self.grid.dim {
                    apply_axis(mat, n, self.grid.dim, axis, &buf, out);
                    buf.copy_from_slice(out);
                }
            }
        }
    }
}

#[inline]
fn matvec<T: Scalar>(mat: &[T], n: usize, x: &[T], out: &mut [T]) {
    for (row, o) in mat.chunks_exact(n).zip(out.iter_mut()) {
        let mut acc = T::zero();
        for (&m, &v) in row.iter().zip(x) {
            acc = acc + m * v;
        }
        *o = acc;
    }
}

fn apply_axis<T: Scalar>(mat: &[T], n: usize, dim: usize, axis: usize, src: &[T], dst: &mut [T]) {
    let stride = n.pow((dim - 1 - axis) as u32);
    let blocks = n.pow(axis as u32);
    let mut line = vec![T::zero(); n];
    let mut res = vec![T::zero(); n];
    for b in 0..blocks {
        for s in 0..stride {
            let base = b * n * stride + s;
            for (l, v) in line.iter_mut().enumerate() {
                *v = src[base + l * stride];
            }
            matvec(mat, n, &line, &mut res);
            for (l, &v) in res.iter().enumerate() {
                dst[base + l * stride] = v;
            }
        }
    }
}

/// Convenience wrapper building a basis for `g.grid`.
pub fn to_spectral<T: Scalar>(g: &GridField<T>) -> SpectralField<T> {
    CosineBasis::new(g.grid).to_spectral(g).expect("grid matches by construction")
}

/// Convenience wrapper building a basis for `a.grid`.
pub fn from_spectral<T: Scalar>(a: &SpectralField<T>) -> GridField<T> {
    CosineBasis::new(a.grid).from_spectral(a).expect("grid matches by construction")
}
