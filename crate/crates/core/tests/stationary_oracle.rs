use std::sync::Arc;

use dampflow_core::{
    dirichlet_energy, energy_gradient, interpolate_boundary, minimality_gap, residual, solve_stationary,
    solve_stationary_from, Field, Grid, PExponent,
};

fn saddle(n: usize) -> Field {
    let grid = Arc::new(Grid::new(2, &[n, n], &[1.0, 1.0]).unwrap());
    Field::from_fn(grid, |x| (x[0] - 0.5).powi(2) - (x[1] - 0.5).powi(2)).unwrap()
}

/// Fixed-step steepest descent on the raw energy gradient, no preconditioner
/// and no line search.
fn plain_descent(start: &Field, p: PExponent, step: f64, iterations: usize) -> Field {
    let mut u = start.clone();
    for _ in 0..iterations {
        let g = energy_gradient(&u, p);
        let next: Vec<f64> = u.values().iter().zip(g.values()).map(|(v, d)| v - step * d).collect();
        u = Field::new(u.grid().clone(), next).unwrap();
    }
    u
}

#[test]
fn saddle_p4_agrees_with_plain_descent() {
    let p = PExponent::new(4.0).unwrap();
    let g = saddle(9);
    let solved = solve_stationary(&g, p, 1e-13, 200_000).unwrap();
    let oracle = plain_descent(&interpolate_boundary(&g), p, 0.03, 1_000_000);
    let diff = solved.u_star.sub(&oracle).unwrap().max_abs();
    assert!(diff <= 1e-5, "preconditioned and plain descent differ by {diff:e}");
    assert!(residual(&oracle, p) < 1e-6);
    assert!(solved.energy <= dirichlet_energy(&oracle, p) + 1e-14);
}

#[test]
fn saddle_p2_is_discrete_harmonic_and_symmetric() {
    let p = PExponent::new(2.0).unwrap();
    let g = saddle(17);
    let r = solve_stationary(&g, p, 1e-13, 100_000).unwrap();
    let n = 17;
    let v = r.u_star.values();
    // g is odd under swapping x and y, and so is the minimiser.
    for i in 0..n {
        for j in 0..n {
            assert!((v[i * n + j] + v[j * n + i]).abs() < 1e-9);
        }
    }
}

#[test]
fn affine_data_is_reproduced_in_one_dimension_from_a_poor_start() {
    let grid = Arc::new(Grid::new(1, &[101], &[2.0]).unwrap());
    let g = Field::from_fn(grid.clone(), |x| 0.3 - 1.7 * x[0]).unwrap();
    for pv in [2.0, 3.0, 4.0, 6.0] {
        let p = PExponent::new(pv).unwrap();
        let start = Field::from_fn(grid.clone(), |x| {
            let affine = 0.3 - 1.7 * x[0];
            affine + 0.5 * (std::f64::consts::PI * x[0]).sin() * (3.0 * x[0]).cos()
        })
        .unwrap();
        let start = dampflow_core::apply_dirichlet(&start, &g).unwrap();
        let r = solve_stationary_from(&start, p, 1e-12, 500_000, |_| {}).unwrap();
        let err = r.u_star.sub(&g).unwrap().max_abs();
        assert!(err <= 1e-8, "p = {pv}: max error {err:e}");
    }
}

#[test]
fn minimiser_beats_random_competitors_in_two_dimensions() {
    use rand::{Rng, SeedableRng};
    let p = PExponent::new(3.0).unwrap();
    let g = saddle(11);
    let r = solve_stationary(&g, p, 1e-12, 100_000).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let grid = g.grid().clone();
    for _ in 0..50 {
        let scale: f64 = rng.gen_range(1e-4..1e-1);
        let vals: Vec<f64> = (0..grid.node_count())
            .map(|k| {
                let base = r.u_star.values()[k];
                if grid.is_boundary(k) {
                    base
                } else {
                    base + scale * rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let v = Field::new(grid.clone(), vals).unwrap();
        assert!(minimality_gap(&r.u_star, &v, p).unwrap() >= -1e-14);
    }
}

#[test]
fn error_term_matches_closed_form_for_linear_case() {
    // u* = x, w = 0.1 sin(πx), w_t = 0, p = 2, a = 1:
    // e = ½·0.01·½ + 2·(½·0.01·π²·½) = 0.0025 + 0.01π²/2.
    let grid = std::sync::Arc::new(dampflow_core::Grid::new(1, &[201], &[1.0]).unwrap());
    let p = dampflow_core::PExponent::new(2.0).unwrap();
    let g = dampflow_core::Field::from_fn(grid.clone(), |x| x[0]).unwrap();
    let reference = dampflow_core::solve_stationary(&g, p, 1e-12, 100_000).unwrap();
    let u = dampflow_core::Field::from_fn(grid, |x| x[0] + 0.1 * (std::f64::consts::PI * x[0]).sin()).unwrap();
    let u = dampflow_core::apply_dirichlet(&u, &g).unwrap();
    let params = dampflow_core::PParams::new(p, 1.0).unwrap();
    let e = dampflow_core::error_term(&dampflow_core::FlowState::at_rest(u), &reference, &params).unwrap();
    let exact = 0.0025 + 0.01 * std::f64::consts::PI.powi(2) / 2.0;
    assert!((e - exact).abs() < 1e-3, "e = {e}, closed form {exact}");
}
