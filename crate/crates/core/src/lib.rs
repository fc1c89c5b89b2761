//! Semi-discrete numerical scheme for nonlocally regularized KdV-type
//! equations
//!
//! ```text
//! u_t + α ∗ (f(u)_x + κ u_xxx) = 0,
//! ```
//!
//! discretized in space by a truncated discrete convolution with the
//! sampled kernel derivative and advanced in time with an adaptive
//! Dormand–Prince 5(4) integrator.

pub mod analysis;
pub mod discrete;
pub mod error;
pub mod integrator;
pub mod io;
pub mod kernels;
pub mod semidiscrete;
pub mod solutions;

pub use analysis::{
    convergence_study, decay_fit, default_tail_window, linf_distance, linf_error, localization_study, rate_richardson,
    rate_two_grid, tail_sup, ConvergenceMode, ConvergenceReport, ConvergenceRow, DecayFit, ExperimentSpec,
    LocalizationReport, LocalizationRow, RunOutcome, TailSide,
};
pub use discrete::{
    build_weights, discrete_convolve, discrete_convolve_fast, l1h_norm, linf_norm, restrict, second_difference,
    ConvolutionPlan, ConvolutionWeights, GridFunction, UniformGrid,
};
pub use error::{Error, Result};
pub use integrator::{
    integrate, integrate_system, FnSystem, IntegrationResult, IntegrationStats, OdeSystem, StepControl,
    ToleranceSettings, Trajectory,
};
pub use kernels::{eval_alpha, eval_alpha_prime, make_kernel, ConditionReport, Kernel, KernelKind};
pub use semidiscrete::{
    assemble, assemble_with, rhs, ConvolutionMethod, Nonlinearity, NonlinearityKind, Problem, ProblemOptions, RhsForm,
};
pub use solutions::{initial_data, sech, solitary_params, solitary_profile, SolitaryWave, WaveFamily};
