//! Discrete p-Laplace energies, stationary solves and the damped flow
//! `u_tt + a·u_t = Δ_p u` on uniform tensor grids.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod operators;
pub mod stationary;
pub mod tolerances;

pub use analysis::{
    assess, check_error_ode, compare_flows, fit_algebraic, fit_exponential, Column, DecayFit,
    DecayModel, FlowComparison, NumericalFloor, OdeReport, Report, VerdictKind, Window,
};
pub use energy::{
    check_invariants, dirichlet_energy, dissipation_residual, error_term, kinetic_energy, measure,
    total_energy, EnergySample, FlowState, PParams, Violation,
};
pub use error::{Error, Result};
pub use evolution::{
    evolve, evolve_observed, problem_fingerprint, stable_dt, step_damped, step_first_order,
    FlowMode, History, IntegratorConfig,
};
pub use grid::{apply_dirichlet, interpolate_boundary, Field, FieldJson, Grid, GridSpec};
pub use operators::{
    gradient, ineq_a1_gap, ineq_a2_gap, ineq_a3_check, lp_norm, p_laplacian, sup_norm,
    w1p_seminorm, GradientField, PExponent,
};
pub use stationary::{
    energy_gradient, minimality_gap, residual, solve_stationary, solve_stationary_from,
    StationaryResult,
};
