//! Dirichlet energy `𝓔(u)`, total energy `E(t)`, the composite error term
//! `e(t)` and the discrete dissipation residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::FlowMode;
use crate::grid::Field;
use crate::operators::{self, PExponent};
use crate::stationary::StationaryResult;
use crate::tolerances;

/// Exponent and damping of the evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PParams {
    pub p: PExponent,
    pub a: f64,
}

impl PParams {
    pub fn new(p: PExponent, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidParameter(format!("damping a = {a} must be positive")));
        }
        Ok(Self { p, a })
    }

    /// `a = 0`: energy-conserving diagnostic mode.
    pub fn undamped(p: PExponent) -> Self {
        Self { p, a: 0.0 }
    }
}

/// Position and velocity of the second-order system at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub u: Field,
    pub ut: Field,
}

impl FlowState {
    pub fn new(t: f64, u: Field, ut: Field) -> Result<Self> {
        u.ensure_same_grid(&ut)?;
        let grid = u.grid();
        if let Some(index) = (0..grid.node_count()).find(|&i| grid.is_boundary(i) && ut.values()[i] != 0.0)
        {
            return Err(Error::BoundaryMismatch { index });
        }
        Ok(Self { t, u, ut })
    }

    /// `(u₀, 0)` at `t = 0`.
    pub fn at_rest(u0: Field) -> Self {
        let ut = Field::zeros(u0.grid().clone());
        Self { t: 0.0, u: u0, ut }
    }
}

/// One row of a run history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub t: f64,
    /// `E(t) = 𝓔(u) + ∫½u_t²`
    pub total: f64,
    pub dirichlet: f64,
    pub kinetic: f64,
    pub error_term: f64,
    /// `‖∇(u − u*)‖_p`
    pub w1p_err: f64,
    /// `‖u − u*‖_p`
    pub lp_err: f64,
    pub sup_err: f64,
    /// `‖u_t‖_{L²}`
    pub l2_ut: f64,
    /// `‖∇u‖_p`
    pub grad_lp: f64,
    /// Step size in force when the sample was taken.
    pub dt: f64,
    /// `∫₀ᵗ ‖u_t‖²` accumulated step by step with the trapezoid rule.
    pub ut_sq_integral: f64,
}

impl EnergySample {
    pub const CSV_HEADER: [&'static str; 12] = [
        "t",
        "E_total",
        "E_dirichlet",
        "kinetic",
        "error_term",
        "w1p_err",
        "lp_err",
        "sup_err",
        "l2_ut",
        "grad_lp",
        "dt_current",
        "ut_sq_integral",
    ];

    pub fn to_record(&self) -> [f64; 12] {
        [
            self.t,
            self.total,
            self.dirichlet,
            self.kinetic,
            self.error_term,
            self.w1p_err,
            self.lp_err,
            self.sup_err,
            self.l2_ut,
            self.grad_lp,
            self.dt,
            self.ut_sq_integral,
        ]
    }

    pub fn from_record(r: &[f64; 12]) -> Self {
        Self {
            t: r[0],
            total: r[1],
            dirichlet: r[2],
            kinetic: r[3],
            error_term: r[4],
            w1p_err: r[5],
            lp_err: r[6],
            sup_err: r[7],
            l2_ut: r[8],
            grad_lp: r[9],
            dt: r[10],
            ut_sq_integral: r[11],
        }
    }
}

/// `(1/p) Σ_c w_c |∇u|_c^p`.
pub fn dirichlet_energy(u: &Field, p: PExponent) -> f64 {
    operators::cell_power_sum(u.grid(), u.values(), p) / p.value()
}

/// `∫ ½ u_t²` with trapezoid weights.
pub fn kinetic_energy(ut: &Field) -> f64 {
    0.5 * squared_l2(ut)
}

pub(crate) fn squared_l2(v: &Field) -> f64 {
    v.grid()
        .node_weights()
        .iter()
        .zip(v.values())
        .map(|(w, x)| w * x * x)
        .sum()
}

pub fn total_energy(state: &FlowState, params: &PParams) -> f64 {
    kinetic_energy(&state.ut) + dirichlet_energy(&state.u, params.p)
}

fn checked_reference(reference: &StationaryResult, u: &Field) -> Result<()> {
    u.ensure_same_grid(&reference.u_star)?;
    if reference.residual > tolerances::REFERENCE_RESIDUAL_LIMIT {
        return Err(Error::ReferenceResidual {
            residual: reference.residual,
            limit: tolerances::REFERENCE_RESIDUAL_LIMIT,
        });
    }
    Ok(())
}

/// `e(t) = ∫ (a²/2)w² + a·w·w_t + w_t² + 2(𝓔(u) − 𝓔(u*))` with `w = u − u*`.
pub fn error_term(state: &FlowState, reference: &StationaryResult, params: &PParams) -> Result<f64> {
    checked_reference(reference, &state.u)?;
    let w = state.u.sub(&reference.u_star)?;
    let a = params.a;
    let quad: f64 = state
        .u
        .grid()
        .node_weights()
        .iter()
        .zip(w.values().iter().zip(state.ut.values()))
        .map(|(q, (w, wt))| q * (0.5 * a * a * w * w + a * w * wt + wt * wt))
        .sum();
    let excess = dirichlet_energy(&state.u, params.p) - reference.energy;
    Ok(quad + 2.0 * excess)
}

/// `|E(t₁) − E(t₀) + a∫_{t₀}^{t₁}‖u_t‖²|`, using the step-level integral
/// carried by the samples.
pub fn dissipation_residual(s0: &EnergySample, s1: &EnergySample, a: f64) -> Result<f64> {
    if s1.t <= s0.t {
        return Err(Error::InvalidParameter(format!(
            "samples out of order: t1 = {} ≤ t0 = {}",
            s1.t, s0.t
        )));
    }
    Ok((s1.total - s0.total + a * (s1.ut_sq_integral - s0.ut_sq_integral)).abs())
}

/// All diagnostics of `state`. In first-order mode the state carries the
/// flow velocity `Δ_p u` in `ut`; no kinetic energy is attributed to it and
/// the error term reduces to the energy excess `2(𝓔(u) − 𝓔(u*))`.
pub fn measure(
    state: &FlowState,
    reference: &StationaryResult,
    params: &PParams,
    mode: FlowMode,
    dt: f64,
    ut_sq_integral: f64,
) -> Result<EnergySample> {
    checked_reference(reference, &state.u)?;
    let p = params.p;
    let dirichlet = dirichlet_energy(&state.u, p);
    let w = state.u.sub(&reference.u_star)?;
    let (kinetic, error_term) = match mode {
        FlowMode::DampedSecondOrder => (kinetic_energy(&state.ut), error_term(state, reference, params)?),
        FlowMode::FirstOrder => (0.0, 2.0 * (dirichlet - reference.energy)),
    };
    Ok(EnergySample {
        t: state.t,
        total: dirichlet + kinetic,
        dirichlet,
        kinetic,
        error_term,
        w1p_err: operators::w1p_seminorm(&w, p),
        lp_err: operators::lp_norm(&w, p.value())?,
        sup_err: operators::sup_norm(&w),
        l2_ut: squared_l2(&state.ut).sqrt(),
        grad_lp: operators::w1p_seminorm(&state.u, p),
        dt,
        ut_sq_integral,
    })
}

/// A broken energy invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EnergyIncrease { t: f64, increase: f64, tol: f64 },
    ErrorTermIncrease { t: f64, increase: f64, tol: f64 },
    ErrorTermNegative { t: f64, value: f64, tol: f64 },
    GradientBound { t: f64, grad_lp: f64, bound: f64 },
    IntegratedBalance { t: f64, excess: f64, tol: f64 },
}

/// Checks a history (initial sample first) against the energy invariants:
/// `E` and `e` nonincreasing, `e ≥ 0`, `‖∇u‖_p ≤ ‖∇u₀‖_p`, and
/// `E(T) + a∫₀ᵀ‖u_t‖² ≤ E(0)`.
pub fn check_invariants(initial: &EnergySample, samples: &[EnergySample], a: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let tol_e_mono = tolerances::MONOTONE_REL * (1.0 + initial.total);
    let tol_err_mono = tolerances::MONOTONE_REL * (1.0 + initial.error_term);
    let tol_err_neg = tolerances::ERROR_TERM_REL * (1.0 + initial.error_term.abs());
    let grad_bound = initial.grad_lp + tolerances::GRADIENT_BOUND_ABS;
    let tol_balance = tolerances::INTEGRATED_BALANCE_REL * initial.total;

    let mut prev = initial;
    for s in std::iter::once(initial).chain(samples) {
        let de = s.total - prev.total;
        if de > tol_e_mono {
            out.push(Violation::EnergyIncrease { t: s.t, increase: de, tol: tol_e_mono });
        }
        let derr = s.error_term - prev.error_term;
        if derr > tol_err_mono {
            out.push(Violation::ErrorTermIncrease { t: s.t, increase: derr, tol: tol_err_mono });
        }
        if s.error_term < -tol_err_neg {
            out.push(Violation::ErrorTermNegative { t: s.t, value: s.error_term, tol: tol_err_neg });
        }
        if s.grad_lp > grad_bound {
            out.push(Violation::GradientBound { t: s.t, grad_lp: s.grad_lp, bound: grad_bound });
        }
        let excess = s.total + a * (s.ut_sq_integral - initial.ut_sq_integral) - initial.total;
        if excess > tol_balance {
            out.push(Violation::IntegratedBalance { t: s.t, excess, tol: tol_balance });
        }
        prev = s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(1, &[n], &[1.0]).unwrap())
    }

    fn p(v: f64) -> PExponent {
        PExponent::new(v).unwrap()
    }

    fn reference(u_star: Field, pe: PExponent) -> StationaryResult {
        let energy = dirichlet_energy(&u_star, pe);
        StationaryResult { u_star, residual: 0.0, iterations: 0, energy, p: pe.value(), tol: 1e-10 }
    }

    #[test]
    fn dirichlet_energy_of_linear() {
        let x = Field::from_fn(line(41), |x| x[0]).unwrap();
        assert!((dirichlet_energy(&x, p(2.0)) - 0.5).abs() < 1e-14);
        assert!((dirichlet_energy(&x, p(4.0)) - 0.25).abs() < 1e-14);
        let c = Field::from_fn(line(41), |_| 7.0).unwrap();
        assert_eq!(dirichlet_energy(&c, p(3.0)), 0.0);
    }

    #[test]
    fn total_energy_examples() {
        let params = PParams::new(p(2.0), 1.0).unwrap();
        let x = Field::from_fn(line(21), |x| x[0]).unwrap();
        let s = FlowState::at_rest(x.clone());
        assert_eq!(total_energy(&s, &params), dirichlet_energy(&x, params.p));
        assert!((total_energy(&s, &params) - 0.5).abs() < 1e-14);
        let c = FlowState::at_rest(Field::from_fn(line(21), |_| 1.0).unwrap());
        assert_eq!(total_energy(&c, &params), 0.0);
    }

    #[test]
    fn rejects_nonpositive_damping() {
        assert!(PParams::new(p(2.0), 0.0).is_err());
        assert!(PParams::new(p(2.0), -1.0).is_err());
        assert_eq!(PParams::undamped(p(2.0)).a, 0.0);
    }

    #[test]
    fn flow_state_requires_pinned_velocity() {
        let g = line(5);
        let u = Field::zeros(g.clone());
        let ut = Field::new(g, vec![0.1, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(FlowState::new(0.0, u, ut), Err(Error::BoundaryMismatch { index: 0 })));
    }

    #[test]
    fn error_term_vanishes_at_stationary_point() {
        let pe = p(3.0);
        let params = PParams::new(pe, 1.5).unwrap();
        let x = Field::from_fn(line(31), |x| x[0]).unwrap();
        let r = reference(x.clone(), pe);
        assert_eq!(error_term(&FlowState::at_rest(x), &r, &params).unwrap(), 0.0);
    }

    #[test]
    fn error_term_at_rest_is_positive() {
        let pe = p(4.0);
        let params = PParams::new(pe, 2.0).unwrap();
        let grid = line(31);
        let x = Field::from_fn(grid.clone(), |x| x[0]).unwrap();
        let u = Field::from_fn(grid, |x| x[0] + 0.2 * (PI * x[0]).sin()).unwrap();
        let r = reference(x, pe);
        let e = error_term(&FlowState::at_rest(u.clone()), &r, &params).unwrap();
        let w = u.sub(&r.u_star).unwrap();
        let expected = 0.5 * 4.0 * squared_l2(&w) + 2.0 * (dirichlet_energy(&u, pe) - r.energy);
        assert!((e - expected).abs() < 1e-14);
        assert!(e > 0.0);
    }

    #[test]
    fn error_term_matches_closed_form_for_p2() {
        // (a²/2)·0.01·½ + 2·(½·0.01π²·½)
        let expected = 0.5 * 0.01 * 0.5 + 0.01 * PI * PI / 2.0;
        let pe = p(2.0);
        let params = PParams::new(pe, 1.0).unwrap();
        let grid = line(201);
        let x = Field::from_fn(grid.clone(), |x| x[0]).unwrap();
        let u = Field::from_fn(grid, |x| x[0] + 0.1 * (PI * x[0]).sin()).unwrap();
        let e = error_term(&FlowState::at_rest(u), &reference(x, pe), &params).unwrap();
        assert!((e - expected).abs() < 1e-3, "{e} vs {expected}");
    }

    #[test]
    fn error_term_rejects_unconverged_reference() {
        let pe = p(2.0);
        let params = PParams::new(pe, 1.0).unwrap();
        let x = Field::from_fn(line(11), |x| x[0]).unwrap();
        let mut r = reference(x.clone(), pe);
        r.residual = 1.0;
        assert!(matches!(
            error_term(&FlowState::at_rest(x.clone()), &r, &params),
            Err(Error::ReferenceResidual { .. })
        ));
        let other = reference(Field::from_fn(line(12), |x| x[0]).unwrap(), pe);
        assert!(matches!(
            error_term(&FlowState::at_rest(x), &other, &params),
            Err(Error::GridMismatch)
        ));
    }

    fn sample(t: f64, total: f64, integral: f64) -> EnergySample {
        EnergySample {
            t,
            total,
            dirichlet: total,
            kinetic: 0.0,
            error_term: 0.0,
            w1p_err: 0.0,
            lp_err: 0.0,
            sup_err: 0.0,
            l2_ut: 0.0,
            grad_lp: 0.0,
            dt: 0.1,
            ut_sq_integral: integral,
        }
    }

    #[test]
    fn dissipation_residual_cases() {
        let s0 = sample(1.0, 0.5, 0.0);
        let s1 = sample(2.0, 0.5, 0.0);
        assert_eq!(dissipation_residual(&s0, &s1, 1.0).unwrap(), 0.0);
        // a = 0: pure conservation check
        let s2 = sample(2.0, 0.4, 0.3);
        assert!((dissipation_residual(&s0, &s2, 0.0).unwrap() - 0.1).abs() < 1e-15);
        // balanced decay
        assert!(dissipation_residual(&s0, &s2, 1.0 / 3.0).unwrap() < 1e-15);
        assert!(dissipation_residual(&s1, &s0, 1.0).is_err());
    }

    #[test]
    fn invariant_checker_flags_increase() {
        let mut init = sample(0.0, 1.0, 0.0);
        init.grad_lp = 1.0;
        let mut bad = sample(1.0, 1.1, 0.0);
        bad.grad_lp = 1.0;
        let v = check_invariants(&init, &[bad], 1.0);
        assert!(v.iter().any(|v| matches!(v, Violation::EnergyIncrease { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::IntegratedBalance { .. })));
        let mut good = sample(1.0, 0.9, 0.1);
        good.grad_lp = 0.99;
        assert!(check_invariants(&init, &[good], 1.0).is_empty());
    }

    #[test]
    fn csv_record_round_trip() {
        let s = sample(0.25, 1.0 / 3.0, 1e-300);
        assert_eq!(EnergySample::from_record(&s.to_record()), s);
    }
}
