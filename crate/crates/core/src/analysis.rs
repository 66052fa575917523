//! Decay-rate fits, the error-term differential inequality check, flow
//! comparisons and run verdicts.

use serde::{Deserialize, Serialize};

use crate::energy::{check_invariants, squared_l2, EnergySample, PParams, Violation};
use crate::error::{Error, Result};
use crate::evolution::{FlowMode, History};
use crate::operators;
use crate::stationary::{solve_stationary_from, StationaryResult};
use crate::tolerances::{
    FLOOR_FACTOR, MIN_FIT_POINTS, MONOTONE_REL, ODE_VIOLATION_FRACTION, RATE_SLACK,
};

/// History column used by a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Column {
    W1pErr,
    ErrorTerm,
    LpErr,
    SupErr,
}

impl Column {
    pub fn value(self, s: &EnergySample) -> f64 {
        match self {
            Column::W1pErr => s.w1p_err,
            Column::ErrorTerm => s.error_term,
            Column::LpErr => s.lp_err,
            Column::SupErr => s.sup_err,
        }
    }

    pub fn floor(self, floor: &NumericalFloor) -> f64 {
        match self {
            Column::W1pErr => floor.w1p,
            Column::ErrorTerm => floor.error_term,
            Column::LpErr => floor.lp,
            Column::SupErr => floor.sup,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Window {
    pub fn new(t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(t_lo < t_hi) || !t_lo.is_finite() || !t_hi.is_finite() {
            return Err(Error::InvalidParameter(format!("empty window [{t_lo}, {t_hi}]")));
        }
        Ok(Self { t_lo, t_hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `log y = intercept + slope·log t`
    Algebraic,
    /// `log y = intercept + slope·t`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub column: Column,
    pub window: Window,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Error levels below which a history measures the stationary solver rather
/// than the flow.
///
/// The solver error `δ = u* − ũ` is estimated by continuing the descent from
/// `u*` to a residual [`POLISH_FACTOR`] times smaller (or until it stalls)
/// and measuring the distance to the polished iterate `ũ` in each norm. A
/// rounding level of a few ulps per node difference bounds the estimate from
/// below, and the result is scaled by [`FLOOR_FACTOR`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalFloor {
    pub w1p: f64,
    pub lp: f64,
    pub sup: f64,
    pub error_term: f64,
}

/// Residual reduction asked of the polishing solve.
pub const POLISH_FACTOR: f64 = 1e-3;

const POLISH_MAX_ITER: usize = 100_000;

impl NumericalFloor {
    pub fn new(reference: &StationaryResult, params: &PParams) -> Self {
        let u_star = &reference.u_star;
        let grid = u_star.grid();
        let p = params.p;
        let a = params.a;
        let tol = (reference.tol.min(reference.residual) * POLISH_FACTOR).max(f64::MIN_POSITIVE);
        let polished = match solve_stationary_from(u_star, p, tol, POLISH_MAX_ITER, |_| {}) {
            Ok(r) => r,
            Err(Error::StationaryNotConverged(r)) => *r,
            Err(_) => reference.clone(),
        };
        let delta = u_star.sub(&polished.u_star).expect("polished iterate shares the grid");

        let rounding = 8.0 * f64::EPSILON * (1.0 + u_star.max_abs());
        let rounding_w1p = rounding / grid.min_spacing() * grid.measure().powf(1.0 / p.value());
        let w1p = FLOOR_FACTOR * operators::w1p_seminorm(&delta, p).max(rounding_w1p);
        let lp = FLOOR_FACTOR
            * operators::lp_norm(&delta, p.value()).unwrap_or(0.0).max(rounding * grid.measure().powf(1.0 / p.value()));
        let sup = FLOOR_FACTOR * delta.max_abs().max(rounding);

        let l2_sq = squared_l2(&delta);
        let energy_gap = (reference.energy - polished.energy).abs();
        let energy_rounding = grid.interior_count() as f64 * f64::EPSILON * (1.0 + reference.energy.abs());
        let error_term = FLOOR_FACTOR * ((0.5 * a * a + a) * l2_sq + 2.0 * energy_gap + energy_rounding);
        Self { w1p, lp, sup, error_term }
    }

    /// A floor that masks nothing except non-positive values.
    pub fn zero() -> Self {
        Self { w1p: 0.0, lp: 0.0, sup: 0.0, error_term: 0.0 }
    }
}

/// In-window points with distinct times; repeated times (several scheduled
/// samples taken at one step) keep the first occurrence.
fn window_points(samples: &[EnergySample], column: Column, window: &Window) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for s in samples.iter().filter(|s| window.contains(s.t)) {
        if out.last().is_some_and(|&(t, _)| t == s.t) {
            continue;
        }
        out.push((s.t, column.value(s)));
    }
    out
}

fn usable_points(
    samples: &[EnergySample],
    column: Column,
    window: &Window,
    floor: f64,
) -> Result<Vec<(f64, f64)>> {
    let all = window_points(samples, column, window);
    let above: Vec<(f64, f64)> =
        all.iter().copied().filter(|&(_, y)| y.is_finite() && y > 0.0 && y > floor).collect();
    if above.len() >= MIN_FIT_POINTS {
        return Ok(above);
    }
    if all.len() >= MIN_FIT_POINTS {
        Err(Error::AtFloor { above: above.len(), total: all.len(), floor })
    } else {
        Err(Error::TooFewPoints { found: all.len(), needed: MIN_FIT_POINTS })
    }
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r2)`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - (intercept + slope * xi);
            r * r
        })
        .sum();
    let scale = syy.max(my * my) * f64::EPSILON * n;
    let r2 = if syy <= scale { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

fn fit(
    model: DecayModel,
    samples: &[EnergySample],
    column: Column,
    window: Window,
    floor: f64,
) -> Result<DecayFit> {
    let pts = usable_points(samples, column, &window, floor)?;
    let x: Vec<f64> = match model {
        DecayModel::Algebraic => pts.iter().map(|&(t, _)| t.ln()).collect(),
        DecayModel::Exponential => pts.iter().map(|&(t, _)| t).collect(),
    };
    let y: Vec<f64> = pts.iter().map(|&(_, v)| v.ln()).collect();
    let (slope, intercept, r2) = least_squares(&x, &y);
    Ok(DecayFit { model, column, window, slope, intercept, r2, n_points: pts.len() })
}

/// Fits `y ≈ C·t^{slope}` to the samples in `window` whose values exceed
/// `floor`.
pub fn fit_algebraic(
    samples: &[EnergySample],
    column: Column,
    window: Window,
    floor: f64,
) -> Result<DecayFit> {
    fit(DecayModel::Algebraic, samples, column, window, floor)
}

/// Fits `y ≈ C·exp(slope·t)` to the samples in `window` whose values exceed
/// `floor`.
pub fn fit_exponential(
    samples: &[EnergySample],
    column: Column,
    window: Window,
    floor: f64,
) -> Result<DecayFit> {
    fit(DecayModel::Exponential, samples, column, window, floor)
}

/// Outcome of testing `e ≤ c₄·(−e′)^{1/p}` on a sampled error term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeReport {
    pub window: Window,
    pub n_points: usize,
    pub violations: usize,
    /// Fraction of points where `e` fails to decrease.
    pub max_violation: f64,
    /// `c₄ = max e/(−e′)^{1/p}` over non-violating points.
    pub fitted_c: f64,
    /// `c₅ = c₄^{−p}` of the rewritten inequality `e′ ≤ −c₅·e^p`.
    pub fitted_c5: f64,
    pub passed: bool,
}

/// Derivative of the sampled error term at interior points, from the
/// second-order three-point formula on non-uniform spacing.
fn centered_derivatives(pts: &[(f64, f64)]) -> Vec<(f64, f64, f64, f64)> {
    pts.windows(3)
        .map(|w| {
            let (t0, e0) = w[0];
            let (t1, e1) = w[1];
            let (t2, e2) = w[2];
            let h1 = t1 - t0;
            let h2 = t2 - t1;
            let d = (h1 * h1 * e2 - h2 * h2 * e0 - (h1 * h1 - h2 * h2) * e1) / (h1 * h2 * (h1 + h2));
            (t1, e1, d, t2 - t0)
        })
        .collect()
}

/// Checks the differential inequality on the error-term samples in `window`
/// that lie above `floor`. A point violates when the decrease `−e′` across
/// its stencil does not exceed the monotonicity tolerance relative to `e`.
pub fn check_error_ode(
    samples: &[EnergySample],
    p: f64,
    window: Window,
    floor: f64,
) -> Result<OdeReport> {
    let pts: Vec<(f64, f64)> = window_points(samples, Column::ErrorTerm, &window)
        .into_iter()
        .filter(|&(_, e)| e.is_finite() && e > 0.0 && e > floor)
        .collect();
    let derivs = centered_derivatives(&pts);
    if derivs.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints { found: derivs.len(), needed: MIN_FIT_POINTS });
    }
    let mut violations = 0;
    let mut fitted_c: f64 = 0.0;
    for &(_, e, d, width) in &derivs {
        if -d * width <= MONOTONE_REL * e {
            violations += 1;
        } else {
            fitted_c = fitted_c.max(e / (-d).powf(1.0 / p));
        }
    }
    let n = derivs.len();
    let max_violation = violations as f64 / n as f64;
    let finite = violations < n && fitted_c.is_finite() && fitted_c > 0.0;
    let fitted_c = if violations < n { fitted_c } else { f64::INFINITY };
    Ok(OdeReport {
        window,
        n_points: n,
        violations,
        max_violation,
        fitted_c,
        fitted_c5: fitted_c.powf(-p),
        passed: finite && max_violation < ODE_VIOLATION_FRACTION,
    })
}

/// Largest ratio of `−e′/a` to its bound `2M^{p−1}‖∇w‖_p + ‖w_t‖²` over the
/// window; values at or below one agree with the bound.
pub fn derivative_bound_ratio(
    samples: &[EnergySample],
    window: Window,
    a: f64,
    gradient_bound: f64,
    p: f64,
) -> Result<f64> {
    let mut rows: Vec<&EnergySample> = Vec::new();
    for s in samples.iter().filter(|s| window.contains(s.t)) {
        if rows.last().is_some_and(|r| r.t == s.t) {
            continue;
        }
        rows.push(s);
    }
    if rows.len() < MIN_FIT_POINTS + 2 {
        return Err(Error::TooFewPoints { found: rows.len().saturating_sub(2), needed: MIN_FIT_POINTS });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|s| (s.t, s.error_term)).collect();
    let mut worst: f64 = 0.0;
    for (k, &(_, _, d, _)) in centered_derivatives(&pts).iter().enumerate() {
        let s = rows[k + 1];
        let bound = 2.0 * gradient_bound.powf(p - 1.0) * s.w1p_err + s.l2_ut * s.l2_ut;
        if bound > 0.0 {
            worst = worst.max((-d / a).abs() / bound);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window: Window,
    pub first_order_slope: Option<f64>,
    pub damped_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub first_order_time: Option<f64>,
    pub damped_time: Option<f64>,
}

/// Side-by-side view of a first-order and a damped run of one problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowComparison {
    pub column: Column,
    pub windows: Vec<WindowRow>,
    pub thresholds: Vec<ThresholdRow>,
}

fn first_time_below(samples: &[EnergySample], column: Column, threshold: f64) -> Option<f64> {
    samples.iter().find(|s| column.value(s) <= threshold).map(|s| s.t)
}

fn slope_in(history: &History, column: Column, window: Window) -> Option<f64> {
    fit_algebraic(&history.samples, column, window, column.floor(&history.floor))
        .ok()
        .map(|f| f.slope)
}

/// Fitted algebraic slopes per window and first times below each threshold.
pub fn compare_flows(
    first_order: &History,
    damped: &History,
    column: Column,
    windows: &[Window],
    thresholds: &[f64],
) -> Result<FlowComparison> {
    if first_order.fingerprint != damped.fingerprint {
        return Err(Error::FingerprintMismatch(
            first_order.fingerprint.clone(),
            damped.fingerprint.clone(),
        ));
    }
    let windows = windows
        .iter()
        .map(|&window| WindowRow {
            window,
            first_order_slope: slope_in(first_order, column, window),
            damped_slope: slope_in(damped, column, window),
        })
        .collect();
    let thresholds = thresholds
        .iter()
        .map(|&threshold| ThresholdRow {
            threshold,
            first_order_time: first_time_below(&first_order.samples, column, threshold),
            damped_time: first_time_below(&damped.samples, column, threshold),
        })
        .collect();
    Ok(FlowComparison { column, windows, thresholds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Pass,
    Fail,
    Inconclusive,
}

/// `−1/((p−1)p)`, the exponent of the `W^{1,p}` decay bound for `p > 2`.
pub fn bound_exponent(p: f64) -> Option<f64> {
    (p > 2.0).then(|| -1.0 / ((p - 1.0) * p))
}

/// `−1/(p−1)`, the exponent of the error-term decay bound for `p > 2`.
pub fn error_term_bound_exponent(p: f64) -> Option<f64> {
    (p > 2.0).then(|| -1.0 / (p - 1.0))
}

/// One-sided comparison of a fitted decay against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub column: Column,
    pub model: DecayModel,
    /// `None` for the exponential model, where only the sign is checked.
    pub bound: Option<f64>,
    pub slope: Option<f64>,
    pub passed: Option<bool>,
    /// The fit failed because too few points lie above the numerical floor.
    pub at_floor: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub fingerprint: String,
    pub mode: FlowMode,
    pub p: f64,
    pub a: f64,
    pub window: Window,
    pub fits: Vec<DecayFit>,
    pub rate_checks: Vec<RateCheck>,
    /// Set when the exponential model explains the `W^{1,p}` error better
    /// than the algebraic one on the window.
    pub exponential_dominant: bool,
    pub ode_check: Option<OdeReport>,
    pub derivative_bound_ratio: Option<f64>,
    pub violations: Vec<Violation>,
    pub verdict: VerdictKind,
    pub reasons: Vec<String>,
}

impl Report {
    /// True when at least one rate fit could not be made because the
    /// history reached the numerical floor.
    pub fn at_floor(&self) -> bool {
        self.rate_checks.iter().any(|c| c.at_floor)
    }

    /// Slope of the `W^{1,p}` rate check, algebraic or exponential.
    pub fn w1p_slope(&self) -> Option<f64> {
        self.rate_checks.iter().find(|c| c.column == Column::W1pErr).and_then(|c| c.slope)
    }
}

fn rate_check(
    history: &History,
    column: Column,
    model: DecayModel,
    bound: Option<f64>,
    window: Window,
    fits: &mut Vec<DecayFit>,
) -> RateCheck {
    let floor = column.floor(&history.floor);
    match fit(model, &history.samples, column, window, floor) {
        Ok(f) => {
            fits.push(f);
            let passed = match bound {
                Some(b) => f.slope <= b + RATE_SLACK,
                None => f.slope < 0.0,
            };
            RateCheck { column, model, bound, slope: Some(f.slope), passed: Some(passed), at_floor: false, note: None }
        }
        Err(e) => RateCheck {
            column,
            model,
            bound,
            slope: None,
            passed: None,
            at_floor: matches!(e, Error::AtFloor { .. }),
            note: Some(e.to_string()),
        },
    }
}

/// Verdict for a run over the given fit window.
///
/// Invariant violations fail the run. For the damped flow with `p > 2` the
/// `W^{1,p}` and error-term slopes must not exceed their bound exponents by
/// more than [`RATE_SLACK`]; for `p = 2` the `W^{1,p}` error must decay
/// exponentially. Slower decay fails; a fit that cannot be made above the
/// numerical floor makes the verdict inconclusive. First-order runs carry no
/// rate verdict.
pub fn assess(history: &History, window: Window) -> Report {
    let p = history.p;
    let balance_rate = match history.mode {
        FlowMode::DampedSecondOrder => history.a,
        FlowMode::FirstOrder => 1.0,
    };
    let violations = check_invariants(&history.initial, &history.samples, balance_rate);
    let mut fits = Vec::new();
    let mut rate_checks = Vec::new();
    let mut reasons = Vec::new();

    let w1p_floor = history.floor.w1p;
    let alg = fit_algebraic(&history.samples, Column::W1pErr, window, w1p_floor).ok();
    let exp = fit_exponential(&history.samples, Column::W1pErr, window, w1p_floor).ok();
    let exponential_dominant = matches!((alg, exp), (Some(a), Some(e)) if e.r2 > a.r2);

    let mut ode_check = None;
    let mut ratio = None;
    match history.mode {
        FlowMode::DampedSecondOrder if p > 2.0 => {
            rate_checks.push(rate_check(history, Column::W1pErr, DecayModel::Algebraic, bound_exponent(p), window, &mut fits));
            rate_checks.push(rate_check(
                history,
                Column::ErrorTerm,
                DecayModel::Algebraic,
                error_term_bound_exponent(p),
                window,
                &mut fits,
            ));
            if let Some(e) = exp {
                fits.push(e);
            }
            match check_error_ode(&history.samples, p, window, history.floor.error_term) {
                Ok(r) => {
                    if !r.passed {
                        reasons.push(format!(
                            "error term decreases at only {:.1}% of points",
                            100.0 * (1.0 - r.max_violation)
                        ));
                    }
                    ode_check = Some(r);
                }
                Err(e) => reasons.push(format!("error-term inequality not checked: {e}")),
            }
            ratio = derivative_bound_ratio(&history.samples, window, history.a, history.gradient_bound(), p).ok();
        }
        FlowMode::DampedSecondOrder => {
            rate_checks.push(rate_check(history, Column::W1pErr, DecayModel::Exponential, None, window, &mut fits));
            if let Some(a) = alg {
                fits.push(a);
            }
        }
        FlowMode::FirstOrder => {
            fits.extend(alg);
            fits.extend(exp);
        }
    }

    for v in &violations {
        reasons.push(format!("invariant violated: {v:?}"));
    }
    for c in &rate_checks {
        match (c.passed, c.slope) {
            (Some(false), Some(s)) => reasons.push(match c.bound {
                Some(b) => format!("{:?} slope {s:.4} exceeds bound {b:.4} + {RATE_SLACK}", c.column),
                None => format!("{:?} exponential slope {s:.4} is not negative", c.column),
            }),
            (None, _) => reasons.push(format!(
                "{:?} fit unavailable: {}",
                c.column,
                c.note.as_deref().unwrap_or("")
            )),
            _ => {}
        }
    }

    let ode_failed = ode_check.is_some_and(|r| !r.passed);
    let verdict = if !violations.is_empty() || rate_checks.iter().any(|c| c.passed == Some(false)) || ode_failed {
        VerdictKind::Fail
    } else if rate_checks.iter().any(|c| c.passed.is_none()) {
        VerdictKind::Inconclusive
    } else {
        VerdictKind::Pass
    };

    Report {
        fingerprint: history.fingerprint.clone(),
        mode: history.mode,
        p,
        a: history.a,
        window,
        fits,
        rate_checks,
        exponential_dominant,
        ode_check,
        derivative_bound_ratio: ratio,
        violations,
        verdict,
        reasons,
    }
}
