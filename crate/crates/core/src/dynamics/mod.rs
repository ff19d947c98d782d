//! Exponential-Euler integration of the stochastic, controlled and
//! skeleton Cahn–Hilliard equations.

mod decomposition;
mod integrator;
mod model;

pub use decomposition::{j_decomposition, JDecomposition};
pub use integrator::{
    moment_diagnostic, solve_skeleton, solve_stochastic, step, Integrator, SkeletonSolution, SolverConfig, TOL_MILD,
};
pub use model::{Cubic, ModelSpec, SigmaPreset};
