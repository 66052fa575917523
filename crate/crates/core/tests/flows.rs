use std::f64::consts::PI;
use std::sync::Arc;

use dampflow_core::analysis::{fit_exponential, Column, Window};
use dampflow_core::{
    apply_dirichlet, check_invariants, dissipation_residual, evolve, interpolate_boundary, solve_stationary,
    step_damped, step_first_order, w1p_seminorm, Field, FlowMode, FlowState, Grid, History, IntegratorConfig,
    PExponent, PParams,
};

struct Setup {
    g: Field,
    u0: Field,
    p: PExponent,
}

/// `g` affine from 0 to 1 (or zero), `u0 = interp(g) + amp·sin(πx/L)`.
fn line_problem(n: usize, length: f64, p: f64, affine: bool, amp: f64) -> Setup {
    let grid = Arc::new(Grid::new(1, &[n], &[length]).unwrap());
    let g = if affine {
        Field::from_fn(grid.clone(), |x| x[0] / length).unwrap()
    } else {
        Field::zeros(grid.clone())
    };
    let base = interpolate_boundary(&g);
    let bumped = Field::from_fn(grid, |x| amp * (PI * x[0] / length).sin()).unwrap();
    let sum: Vec<f64> = base.values().iter().zip(bumped.values()).map(|(a, b)| a + b).collect();
    let u0 = apply_dirichlet(&Field::new(base.grid().clone(), sum).unwrap(), &g).unwrap();
    Setup { g, u0, p: PExponent::new(p).unwrap() }
}

fn run(s: &Setup, a: f64, mode: FlowMode, t_final: f64, safety: f64) -> History {
    let reference = solve_stationary(&s.g, s.p, 1e-12, 100_000).unwrap();
    let mut cfg = IntegratorConfig::new(mode, t_final);
    cfg.dt_safety = safety;
    evolve(&s.u0, &s.g, &reference, &PParams::new(s.p, a).unwrap(), &cfg).unwrap()
}

#[test]
fn overdamped_linear_decay_matches_slowest_mode() {
    let s = line_problem(201, 8.0, 2.0, true, 1.0);
    let h = run(&s, 1.0, FlowMode::DampedSecondOrder, 60.0, 0.5);
    let fit = fit_exponential(&h.samples, Column::W1pErr, Window::new(5.0, 40.0).unwrap(), h.floor.w1p).unwrap();
    // w_tt + w_t + λ w = 0 with the discrete Dirichlet eigenvalue λ of the
    // slowest mode decays like exp(−r t), r = (1 − √(1 − 4λ))/2.
    let dx = 8.0 / 200.0;
    let lambda = 4.0 / (dx * dx) * (PI * dx / 16.0).sin().powi(2);
    let rate = 0.5 * (1.0 - (1.0 - 4.0 * lambda).sqrt());
    assert!((fit.slope + rate).abs() < 0.01 * rate, "slope {} vs rate {rate}", fit.slope);
    assert!(fit.r2 > 0.999);
}

#[test]
fn first_order_linear_decay_matches_discrete_eigenvalue() {
    let s = line_problem(41, 1.0, 2.0, false, 1.0);
    let h = run(&s, 1.0, FlowMode::FirstOrder, 2.0, 0.5);
    let fit = fit_exponential(&h.samples, Column::W1pErr, Window::new(0.2, 1.0).unwrap(), h.floor.w1p).unwrap();
    let dx = 1.0 / 40.0;
    let lambda = 4.0 / (dx * dx) * (PI * dx / 2.0).sin().powi(2);
    let dt = 0.5 * dx * dx;
    let per_step = (1.0 - dt * lambda).ln() / dt;
    assert!((fit.slope - per_step).abs() < 1e-6 * lambda, "slope {} vs {per_step}", fit.slope);
}

fn interval_residuals(h: &History, a: f64) -> Vec<f64> {
    let mut all = vec![h.initial];
    all.extend(h.samples.iter().copied());
    all.windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| dissipation_residual(&w[0], &w[1], a).unwrap())
        .collect()
}

#[test]
fn dissipation_identity_converges_at_first_order() {
    for (p, length, affine, amp) in [(2.0, 8.0, true, 1.0), (4.0, 1.0, false, 0.2)] {
        let s = line_problem(201, length, p, affine, amp);
        let coarse = run(&s, 1.0, FlowMode::DampedSecondOrder, 10.0, 0.5);
        let fine = run(&s, 1.0, FlowMode::DampedSecondOrder, 10.0, 0.25);
        let sum = |h: &History| interval_residuals(h, 1.0).iter().sum::<f64>();
        let ratio = sum(&coarse) / sum(&fine);
        assert!(ratio >= 1.8, "p = {p}: residual ratio {ratio}");
        let last = coarse.samples.last().unwrap();
        let cumulative = (last.total - coarse.initial.total + last.ut_sq_integral).abs();
        assert!(cumulative <= 0.01 * coarse.initial.total);
    }
}

#[test]
fn reference_runs_satisfy_energy_invariants() {
    for (p, length, affine, amp, t_final) in
        [(2.0, 8.0, true, 1.0, 60.0), (2.0, 1.0, true, 1.0, 60.0), (3.0, 1.0, false, 0.2, 500.0), (4.0, 1.0, false, 0.2, 500.0)]
    {
        let s = line_problem(201, length, p, affine, amp);
        let h = run(&s, 1.0, FlowMode::DampedSecondOrder, t_final, 0.5);
        let v = check_invariants(&h.initial, &h.samples, 1.0);
        assert!(v.is_empty(), "p = {p}, L = {length}: {v:?}");
        assert!(h.samples.iter().all(|x| x.grad_lp <= h.gradient_bound() + 1e-8));
    }
}

#[test]
fn first_order_flow_decreases_energy() {
    let s = line_problem(51, 1.0, 4.0, false, 0.5);
    let h = run(&s, 1.0, FlowMode::FirstOrder, 5.0, 0.5);
    assert!(check_invariants(&h.initial, &h.samples, 1.0).is_empty());
    assert!(h.samples.iter().all(|x| x.kinetic == 0.0));
}

#[test]
fn stationary_state_stays_put_for_ten_thousand_steps() {
    let saddle = {
        let grid = Arc::new(Grid::new(2, &[17, 17], &[1.0, 1.0]).unwrap());
        Field::from_fn(grid, |x| (x[0] - 0.5).powi(2) - (x[1] - 0.5).powi(2)).unwrap()
    };
    let affine = line_problem(201, 1.0, 2.0, true, 0.0).g;
    for g in [affine, saddle] {
        for pv in [2.0, 4.0] {
            let p = PExponent::new(pv).unwrap();
            let reference = solve_stationary(&g, p, 1e-12, 200_000).unwrap();
            let params = PParams::new(p, 1.0).unwrap();
            let floor = dampflow_core::NumericalFloor::new(&reference, &params);
            let mut state = FlowState::at_rest(reference.u_star.clone());
            let dt = dampflow_core::stable_dt(&state.u, p, 0.5, FlowMode::DampedSecondOrder);
            for _ in 0..10_000 {
                state = step_damped(&state, &params, dt).unwrap();
            }
            let drift = w1p_seminorm(&state.u.sub(&reference.u_star).unwrap(), p);
            assert!(drift <= floor.w1p, "dim {} p = {pv}: drift {drift:e} floor {:e}", g.grid().dim(), floor.w1p);
        }
    }
}

#[test]
fn heavy_damping_tracks_rescaled_first_order_flow() {
    // For large a the damped flow at time a·s follows the first-order flow at time s.
    let s = line_problem(21, 1.0, 3.0, false, 0.5);
    let a = 200.0;
    let params = PParams::new(s.p, a).unwrap();
    let s_final = 0.02;
    let dt_first = 0.1 * dampflow_core::stable_dt(&s.u0, s.p, 0.5, FlowMode::FirstOrder);
    let steps = (s_final / dt_first).round() as usize;
    let mut v = s.u0.clone();
    for _ in 0..steps {
        v = step_first_order(&v, s.p, dt_first).unwrap();
    }
    let dt = a * dt_first / 50.0;
    let mut state = FlowState::at_rest(s.u0.clone());
    for _ in 0..steps * 50 {
        state = step_damped(&state, &params, dt).unwrap();
    }
    let moved = w1p_seminorm(&v.sub(&s.u0).unwrap(), s.p);
    let gap = w1p_seminorm(&state.u.sub(&v).unwrap(), s.p);
    assert!(gap < 0.02 * moved, "gap {gap:e} vs displacement {moved:e}");
}

#[test]
fn undamped_linear_energy_stays_bounded() {
    let s = line_problem(101, 1.0, 2.0, false, 1.0);
    let params = PParams::undamped(s.p);
    let dt = dampflow_core::stable_dt(&s.u0, s.p, 0.5, FlowMode::DampedSecondOrder);
    let mut state = FlowState::at_rest(s.u0.clone());
    let e0 = dampflow_core::total_energy(&state, &params);
    for _ in 0..20_000 {
        state = step_damped(&state, &params, dt).unwrap();
        let e = dampflow_core::total_energy(&state, &params);
        assert!((e - e0).abs() < 0.01 * e0);
    }
}

#[test]
fn evolution_is_deterministic() {
    let s = line_problem(101, 1.0, 4.0, false, 0.2);
    let a = run(&s, 1.0, FlowMode::DampedSecondOrder, 50.0, 0.5);
    let b = run(&s, 1.0, FlowMode::DampedSecondOrder, 50.0, 0.5);
    assert_eq!(a, b);
}
