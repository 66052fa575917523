//! Thresholds shared by the invariant checks, the fits and the verdicts.
//!
//! Relative tolerances are scaled by `1 + initial value` of the quantity
//! they guard, so runs with very different magnitudes use the same numbers.

/// Allowed increase of `E` or `e` between consecutive samples, relative to
/// `1 + initial value`.
pub const MONOTONE_REL: f64 = 1e-8;

/// Allowed negativity of `e(t)`, relative to `1 + |e(0)|`.
pub const ERROR_TERM_REL: f64 = 1e-10;

/// Allowed excess of `‖∇u(t)‖_p` over `‖∇u₀‖_p`.
pub const GRADIENT_BOUND_ABS: f64 = 1e-8;

/// Allowed excess of `E(T) + a∫‖u_t‖²` over `E(0)`, relative to `E(0)`.
/// The discrete balance holds to first order in `dt`, not exactly.
pub const INTEGRATED_BALANCE_REL: f64 = 1e-2;

/// Largest stationary residual for which `e(t)` is still meaningful.
pub const REFERENCE_RESIDUAL_LIMIT: f64 = 1e-6;

/// Samples within this factor of the stationary error level are excluded
/// from fits.
pub const FLOOR_FACTOR: f64 = 10.0;

/// Fits need at least this many points.
pub const MIN_FIT_POINTS: usize = 8;

/// Slack on the decay exponent when checking the algebraic rate bound.
pub const RATE_SLACK: f64 = 0.05;

/// Largest admissible fraction of non-decreasing points in the error-term
/// differential inequality check.
pub const ODE_VIOLATION_FRACTION: f64 = 0.05;

/// Regularisation of the degenerate diagonal preconditioner.
pub const PRECONDITIONER_EPS: f64 = 1e-12;

/// Steps between recomputations of the stable time step.
pub const DT_RECOMPUTE_STEPS: usize = 16;
