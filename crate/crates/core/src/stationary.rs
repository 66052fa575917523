//! Discrete stationary p-Laplace Dirichlet problem, solved by minimising the
//! discrete Dirichlet energy over fields with the prescribed boundary values.
//!
//! The descent direction is the energy gradient scaled by a diagonal
//! preconditioner built from `(p−1)(|∇u|^{p−2} + ε)` on the adjacent cells,
//! and the step length comes from Armijo backtracking. Energy increments for
//! the line search are evaluated cell by cell in a cancellation-free form, so
//! the sufficient-decrease test stays meaningful when the residual is near
//! machine precision.

use serde::{Deserialize, Serialize};

use crate::energy::dirichlet_energy;
use crate::error::{Error, Result};
use crate::grid::{interpolate_boundary, Field, Grid};
use crate::operators::{energy_gradient_into, for_each_cell_gradient, PExponent};
use crate::tolerances::PRECONDITIONER_EPS;

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-40;

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryResult {
    pub u_star: Field,
    /// Max-norm of the interior energy gradient at `u_star`.
    pub residual: f64,
    pub iterations: usize,
    /// `𝓔(u_star)`
    pub energy: f64,
    pub p: f64,
    pub tol: f64,
}

/// Metadata stored next to the `u*` field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeta {
    pub p: f64,
    pub tol: f64,
    pub residual: f64,
    pub iterations: usize,
    pub energy: f64,
}

impl StationaryResult {
    pub fn meta(&self) -> StationaryMeta {
        StationaryMeta {
            p: self.p,
            tol: self.tol,
            residual: self.residual,
            iterations: self.iterations,
            energy: self.energy,
        }
    }

    /// Rebuilds a result from its persisted parts; the residual is recomputed.
    pub fn from_parts(u_star: Field, meta: &StationaryMeta) -> Result<Self> {
        let p = PExponent::new(meta.p)?;
        Ok(Self {
            residual: residual(&u_star, p),
            energy: dirichlet_energy(&u_star, p),
            iterations: meta.iterations,
            p: meta.p,
            tol: meta.tol,
            u_star,
        })
    }
}

/// Progress report for one accepted descent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStep {
    pub iteration: usize,
    pub energy: f64,
    pub residual: f64,
    pub step_length: f64,
}

/// `∂𝓔_h/∂u_i` at interior nodes, zero on the boundary.
pub fn energy_gradient(u: &Field, p: PExponent) -> Field {
    let grid = u.grid().clone();
    let mut out = vec![0.0; grid.node_count()];
    energy_gradient_into(&grid, u.values(), p, &mut out);
    Field::new(grid, out).expect("energy gradient of a finite field overflowed")
}

/// Max-norm of the interior energy gradient.
pub fn residual(u: &Field, p: PExponent) -> f64 {
    energy_gradient(u, p).max_abs()
}

/// Solves `−Δ_p u* = 0`, `u* = g` on the boundary, starting from the
/// boundary interpolant of `g`.
pub fn solve_stationary(g: &Field, p: PExponent, tol: f64, max_iter: usize) -> Result<StationaryResult> {
    solve_stationary_from(&interpolate_boundary(g), p, tol, max_iter, |_| {})
}

/// Same as [`solve_stationary`] from an arbitrary initial iterate whose
/// boundary values define the problem. `observer` sees every accepted step.
pub fn solve_stationary_from(
    initial: &Field,
    p: PExponent,
    tol: f64,
    max_iter: usize,
    mut observer: impl FnMut(&SolverStep),
) -> Result<StationaryResult> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let grid = initial.grid().clone();
    let n = grid.node_count();
    let mut u = initial.values().to_vec();
    let mut grad = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut energy = dirichlet_energy(initial, p);
    let mut step_length: f64 = 1.0;

    energy_gradient_into(&grid, &u, p, &mut grad);
    let mut res = max_abs(&grad);
    let mut iterations = 0;

    let finish = |u: Vec<f64>, res: f64, iterations: usize, energy: f64| StationaryResult {
        u_star: Field::new(grid.clone(), u).expect("descent iterate stays finite"),
        residual: res,
        iterations,
        energy,
        p: p.value(),
        tol,
    };

    while res > tol {
        if iterations == max_iter {
            return Err(Error::StationaryNotConverged(Box::new(finish(u, res, iterations, energy))));
        }
        preconditioner_diagonal(&grid, &u, p, &mut diag);
        let mut slope = 0.0;
        for k in 0..n {
            dir[k] = if diag[k] > 0.0 { -grad[k] / diag[k] } else { 0.0 };
            slope += grad[k] * dir[k];
        }
        if slope >= 0.0 {
            break;
        }

        let mut alpha = (2.0 * step_length).min(1.0);
        let increment = loop {
            let inc = energy_increment(&grid, &u, &dir, alpha, p);
            if inc <= ARMIJO_C1 * alpha * slope {
                break Some(inc);
            }
            alpha *= 0.5;
            if alpha < MIN_STEP {
                break None;
            }
        };
        let Some(inc) = increment else {
            // No descent possible at working precision.
            return Err(Error::StationaryNotConverged(Box::new(finish(u, res, iterations, energy))));
        };

        for k in 0..n {
            u[k] += alpha * dir[k];
        }
        energy += inc;
        step_length = alpha;
        iterations += 1;
        energy_gradient_into(&grid, &u, p, &mut grad);
        res = max_abs(&grad);
        observer(&SolverStep {
            iteration: iterations,
            energy,
            residual: res,
            step_length: alpha,
        });
    }

    let u_star = Field::new(grid.clone(), u).expect("descent iterate stays finite");
    let energy = dirichlet_energy(&u_star, p);
    if res > tol {
        return Err(Error::StationaryNotConverged(Box::new(StationaryResult {
            u_star,
            residual: res,
            iterations,
            energy,
            p: p.value(),
            tol,
        })));
    }
    Ok(StationaryResult {
        u_star,
        residual: res,
        iterations,
        energy,
        p: p.value(),
        tol,
    })
}

/// `𝓔(v) − 𝓔(u*)` for an admissible competitor `v`.
pub fn minimality_gap(u_star: &Field, v: &Field, p: PExponent) -> Result<f64> {
    if let Some(index) = u_star.boundary_mismatch(v)? {
        return Err(Error::BoundaryMismatch { index });
    }
    Ok(dirichlet_energy(v, p) - dirichlet_energy(u_star, p))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Diagonal of the Hessian of the `p = 2`-like quadratic model with
/// coefficient `(p−1)(|∇u|^{p−2} + ε)` frozen per cell.
fn preconditioner_diagonal(grid: &Grid, u: &[f64], p: PExponent, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let pm1 = p.value() - 1.0;
    let n = grid.nodes_per_axis();
    match grid.dim() {
        1 => {
            let h = grid.spacing(0);
            for_each_cell_gradient(grid, u, |e, g| {
                let c = pm1 * (p.pow_excess(g[0].abs()) + PRECONDITIONER_EPS) / h;
                out[e] += c;
                out[e + 1] += c;
            });
        }
        _ => {
            let (h0, h1, n1) = (grid.spacing(0), grid.spacing(1), n[1]);
            let geom = h0 * h1 * (0.25 / (h0 * h0) + 0.25 / (h1 * h1));
            for_each_cell_gradient(grid, u, |cell, g| {
                let (i, j) = (cell / (n1 - 1), cell % (n1 - 1));
                let c = pm1 * (p.pow_excess(g[0].hypot(g[1])) + PRECONDITIONER_EPS) * geom;
                let ia = i * n1 + j;
                let ib = ia + n1;
                for k in [ia, ib, ia + 1, ib + 1] {
                    out[k] += c;
                }
            });
        }
    }
    for (k, v) in out.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *v = 0.0;
        }
    }
}

/// `𝓔(u + α·d) − 𝓔(u)` summed per cell as
/// `|g|^p · expm1((p/2)·ln1p(q/|g|²))/p` with `q = 2α g·δ + α²|δ|²`.
fn energy_increment(grid: &Grid, u: &[f64], d: &[f64], alpha: f64, p: PExponent) -> f64 {
    let mut du = Vec::with_capacity(grid.cell_count());
    for_each_cell_gradient(grid, d, |_, g| du.push(g));
    let w = grid.cell_weight();
    let half_p = 0.5 * p.value();
    let mut sum = 0.0;
    for_each_cell_gradient(grid, u, |cell, g| {
        let dg = du[cell];
        let s = g[0] * g[0] + g[1] * g[1];
        let q = alpha * (2.0 * (g[0] * dg[0] + g[1] * dg[1]) + alpha * (dg[0] * dg[0] + dg[1] * dg[1]));
        let inc = if s > 0.0 {
            let rel = (q / s).max(-1.0);
            p.pow(s.sqrt()) * (half_p * rel.ln_1p()).exp_m1()
        } else {
            q.max(0.0).powf(half_p)
        };
        sum += w * inc;
    });
    sum / p.value()
}
