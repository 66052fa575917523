//! Explicit time integration of the damped flow `u_tt + a·u_t = Δ_p u` and of
//! the first-order steepest-descent flow `v_t = Δ_p v`.
//!
//! The damped update treats damping implicitly and stiffness explicitly:
//!
//! ```text
//! v⁺ = (v + dt·Δ_p u) / (1 + a·dt)      interior nodes, v⁺ = 0 on ∂Ω
//! u⁺ = u + dt·v⁺
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::NumericalFloor;
use crate::energy::{measure, EnergySample, FlowState, PParams};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operators::{max_gradient_magnitude, p_laplacian_into, PExponent};
use crate::stationary::StationaryResult;
use crate::tolerances::DT_RECOMPUTE_STEPS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    DampedSecondOrder,
    FirstOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub mode: FlowMode,
    pub dt_safety: f64,
    pub t_final: f64,
    /// Number of log-spaced sample times in `[t_min, t_final]`.
    pub samples: usize,
    pub t_min: f64,
    pub recompute_every: usize,
}

impl IntegratorConfig {
    pub fn new(mode: FlowMode, t_final: f64) -> Self {
        Self {
            mode,
            dt_safety: 0.5,
            t_final,
            samples: 200,
            t_min: 0.1,
            recompute_every: DT_RECOMPUTE_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dt_safety {} not in (0, 1]",
                self.dt_safety
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample schedule is empty".into()));
        }
        if !(self.t_min > 0.0 && self.t_final > self.t_min && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < t_min < t_final, got t_min = {} and t_final = {}",
                self.t_min, self.t_final
            )));
        }
        if self.recompute_every == 0 {
            return Err(Error::InvalidParameter("recompute_every must be positive".into()));
        }
        Ok(())
    }

    /// `t_min · (t_final/t_min)^{k/(count−1)}`, ending exactly at `t_final`.
    pub fn schedule(&self) -> Vec<f64> {
        if self.samples == 1 {
            return vec![self.t_final];
        }
        let ratio = self.t_final / self.t_min;
        let last = (self.samples - 1) as f64;
        let mut times: Vec<f64> = (0..self.samples)
            .map(|k| self.t_min * ratio.powf(k as f64 / last))
            .collect();
        *times.last_mut().unwrap() = self.t_final;
        times
    }
}

/// Largest step of the explicit scheme for the current state.
///
/// Damped mode: `safety·h_min / max(1, max_c |∇u|^{(p−2)/2})`.
/// First-order mode: `safety·h_min² / max(1, (p−1)·max_c |∇u|^{p−2})`.
pub fn stable_dt(u: &Field, p: PExponent, safety: f64, mode: FlowMode) -> f64 {
    stable_dt_raw(u.grid(), u.values(), p, safety, mode)
}

fn stable_dt_raw(grid: &Grid, u: &[f64], p: PExponent, safety: f64, mode: FlowMode) -> f64 {
    let h = grid.min_spacing();
    let gmax = max_gradient_magnitude(grid, u);
    let excess = p.value() - 2.0;
    match mode {
        FlowMode::DampedSecondOrder => {
            let speed = gmax.powf(0.5 * excess);
            safety * h / speed.max(1.0)
        }
        FlowMode::FirstOrder => {
            let stiff = (p.value() - 1.0) * gmax.powf(excess);
            safety * h * h / stiff.max(1.0)
        }
    }
}

/// Scratch space for in-place stepping.
struct Stepper<'g> {
    grid: &'g Grid,
    boundary: Vec<bool>,
    weights: Vec<f64>,
    lap: Vec<f64>,
}

impl<'g> Stepper<'g> {
    fn new(grid: &'g Grid) -> Self {
        Self {
            grid,
            boundary: grid.boundary_mask(),
            weights: grid.node_weights(),
            lap: vec![0.0; grid.node_count()],
        }
    }

    /// Returns `false` when the update produced a non-finite value.
    fn damped(&mut self, u: &mut [f64], v: &mut [f64], p: PExponent, a: f64, dt: f64) -> bool {
        p_laplacian_into(self.grid, u, p, &mut self.lap);
        let denom = 1.0 + a * dt;
        let mut finite = true;
        for k in 0..u.len() {
            if self.boundary[k] {
                v[k] = 0.0;
                continue;
            }
            v[k] = (v[k] + dt * self.lap[k]) / denom;
            u[k] += dt * v[k];
            finite &= u[k].is_finite() && v[k].is_finite();
        }
        finite
    }

    /// First-order step; `v` receives the flow velocity `Δ_p u`.
    fn first_order(&mut self, u: &mut [f64], v: &mut [f64], p: PExponent, dt: f64) -> bool {
        p_laplacian_into(self.grid, u, p, &mut self.lap);
        let mut finite = true;
        for k in 0..u.len() {
            if self.boundary[k] {
                v[k] = 0.0;
                continue;
            }
            v[k] = self.lap[k];
            u[k] += dt * v[k];
            finite &= u[k].is_finite() && v[k].is_finite();
        }
        finite
    }

    fn squared_l2(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(w, x)| w * x * x).sum()
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step {dt} must be positive")));
    }
    Ok(())
}

/// One step of the damped flow. Boundary values of `u` are left untouched,
/// so a boundary-consistent state stays pinned to its Dirichlet data.
pub fn step_damped(state: &FlowState, params: &PParams, dt: f64) -> Result<FlowState> {
    check_dt(dt)?;
    let grid = state.u.grid().clone();
    let mut u = state.u.values().to_vec();
    let mut v = state.ut.values().to_vec();
    if !Stepper::new(&grid).damped(&mut u, &mut v, params.p, params.a, dt) {
        return Err(Error::Unstable { t: state.t, dt, samples: Vec::new() });
    }
    Ok(FlowState {
        t: state.t + dt,
        u: Field::new(grid.clone(), u)?,
        ut: Field::new(grid, v)?,
    })
}

/// One explicit Euler step of the first-order flow.
pub fn step_first_order(u: &Field, p: PExponent, dt: f64) -> Result<Field> {
    check_dt(dt)?;
    let grid = u.grid().clone();
    let mut vals = u.values().to_vec();
    let mut v = vec![0.0; vals.len()];
    if !Stepper::new(&grid).first_order(&mut vals, &mut v, p, dt) {
        return Err(Error::Unstable { t: 0.0, dt, samples: Vec::new() });
    }
    Field::new(grid, vals)
}

/// Identifies the discrete problem `(grid, p, g, u₀)`.
pub fn problem_fingerprint(p: PExponent, g: &Field, u0: &Field) -> String {
    let mut hasher = Sha256::new();
    let spec = serde_json::to_vec(&g.grid().spec()).expect("grid spec serializes");
    hasher.update(&spec);
    hasher.update(p.value().to_le_bytes());
    for v in g.values().iter().chain(u0.values()) {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Sampled trajectory of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub fingerprint: String,
    pub mode: FlowMode,
    pub p: f64,
    pub a: f64,
    /// Diagnostics of the initial state `(u₀, 0)` at `t = 0`.
    pub initial: EnergySample,
    pub samples: Vec<EnergySample>,
    pub stationary_residual: f64,
    pub floor: NumericalFloor,
    pub steps: usize,
}

impl History {
    /// `M = ‖∇u₀‖_p`.
    pub fn gradient_bound(&self) -> f64 {
        self.initial.grad_lp
    }
}

/// Runs the configured flow from `(u₀, 0)` and samples it on the schedule.
pub fn evolve(
    u0: &Field,
    g: &Field,
    reference: &StationaryResult,
    params: &PParams,
    cfg: &IntegratorConfig,
) -> Result<History> {
    evolve_observed(u0, g, reference, params, cfg, |_, _| {})
}

/// [`evolve`], handing every sampled state to `observer` together with its
/// sample index (used for checkpoints).
pub fn evolve_observed(
    u0: &Field,
    g: &Field,
    reference: &StationaryResult,
    params: &PParams,
    cfg: &IntegratorConfig,
    mut observer: impl FnMut(usize, &FlowState),
) -> Result<History> {
    cfg.validate()?;
    if let Some(index) = u0.boundary_mismatch(g)? {
        return Err(Error::BoundaryMismatch { index });
    }
    if let Some(index) = reference.u_star.boundary_mismatch(g)? {
        return Err(Error::BoundaryMismatch { index });
    }
    let grid = u0.grid().clone();
    let p = params.p;
    let schedule = cfg.schedule();

    let start = FlowState::at_rest(u0.clone());
    let initial = measure(&start, reference, params, cfg.mode, 0.0, 0.0)?;

    let mut u = u0.values().to_vec();
    let mut v = vec![0.0; u.len()];
    let mut stepper = Stepper::new(&grid);
    let mut t = 0.0;
    let mut dt = 0.0;
    let mut steps = 0usize;
    let mut integral = 0.0;
    let mut v_sq = 0.0;
    let mut samples = Vec::with_capacity(schedule.len());
    let mut next = 0;

    while next < schedule.len() {
        if steps % cfg.recompute_every == 0 {
            dt = stable_dt_raw(&grid, &u, p, cfg.dt_safety, cfg.mode);
        }
        let ok = match cfg.mode {
            FlowMode::DampedSecondOrder => stepper.damped(&mut u, &mut v, p, params.a, dt),
            FlowMode::FirstOrder => stepper.first_order(&mut u, &mut v, p, dt),
        };
        if !ok {
            return Err(Error::Unstable { t, dt, samples });
        }
        t += dt;
        steps += 1;
        let v_sq_new = stepper.squared_l2(&v);
        integral += 0.5 * dt * (v_sq + v_sq_new);
        v_sq = v_sq_new;

        if t >= schedule[next] {
            let state = FlowState {
                t,
                u: Field::new(grid.clone(), u.clone())?,
                ut: Field::new(grid.clone(), v.clone())?,
            };
            let sample = measure(&state, reference, params, cfg.mode, dt, integral)?;
            while next < schedule.len() && t >= schedule[next] {
                observer(next, &state);
                samples.push(sample);
                next += 1;
            }
        }
    }

    Ok(History {
        fingerprint: problem_fingerprint(p, g, u0),
        mode: cfg.mode,
        p: p.value(),
        a: params.a,
        initial,
        samples,
        stationary_residual: reference.residual,
        floor: NumericalFloor::new(reference, params),
        steps,
    })
}
