//! Numerical lab for small-noise large deviations of the stochastic
//! Cahn–Hilliard equation on `[0, π]^d` with Neumann boundary conditions.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*F64`
//! aliases below fix the usual double-precision instantiation.

pub mod dynamics;
pub mod error;
pub mod fields;
pub mod ldp;
pub mod noise;
pub mod rate;
mod scalar;
pub mod spectral;
pub mod stats;

pub use dynamics::{
    j_decomposition, moment_diagnostic, solve_skeleton, solve_stochastic, step, Cubic, Integrator, JDecomposition,
    ModelSpec, SigmaPreset, SkeletonSolution, SolverConfig, TOL_MILD,
};
pub use error::{Error, Result};
pub use fields::{
    control_norm_sq, holder_modulus, holder_norm, lp_norm, ControlPath, Grid, GridField, HolderNorm, Trajectory,
    TrajectoryMeta,
};
pub use ldp::{
    control_diameter, importance_sample, ldp_scaling_study, mc_event_probability, verify_a1, verify_a2, A1Report,
    A2Family, A2Report, EventKind, EventSpec, IsEstimate, McConfig, McEstimate, ScalingOptions, ScalingReport,
};
pub use noise::{girsanov_log_weight, sample_sheet, shift_increments, NoisePath, SeedRule, SeedSpec, SheetConfig};
pub use rate::{
    adjoint_gradient, admissibility_residual, minimize_rate, rate_eval, RateCertificate, RateOptions, RateProblem,
    SmoothFunctional, TerminalTarget,
};
pub use scalar::Scalar;
pub use spectral::{
    check_green_increments, from_spectral, green_kernel_eval, to_spectral, BasisIndex, CosineBasis,
    GreenIncrementReport, GreenProbe, SpectralField,
};

pub type GridFieldF64 = GridField<f64>;
pub type SpectralFieldF64 = SpectralField<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type ControlPathF64 = ControlPath<f64>;
pub type NoisePathF64 = NoisePath<f64>;
pub type ModelSpecF64 = ModelSpec<f64>;
pub type SolverConfigF64 = SolverConfig<f64>;
pub type RateCertificateF64 = RateCertificate<f64>;
pub type TerminalTargetF64 = TerminalTarget<f64>;
pub type EventSpecF64 = EventSpec<f64>;
pub type McConfigF64 = McConfig<f64>;
