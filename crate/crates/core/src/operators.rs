//! Discrete differential operators on [`Grid`]s.
//!
//! Gradients live on edges (1D) or cells (2D). In 2D each cell carries one
//! vector obtained by averaging the two parallel edge differences per axis,
//! so `|∇u|` is evaluated at a single quadrature point per cell. The discrete
//! p-Laplacian is *defined* as the negative gradient of the discrete
//! Dirichlet energy with respect to the interior nodal values, divided by
//! the interior quadrature weight. With that definition the discrete flow
//! dissipates exactly the energy the diagnostics measure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// Exponent `p ≥ 2` of the p-Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PExponent {
    p: f64,
    /// `p - 2` when it is a small non-negative integer, enabling `powi`.
    int_excess: Option<i32>,
}

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::InvalidExponent(p));
        }
        let excess = p - 2.0;
        let int_excess = (excess.fract() == 0.0 && excess <= 64.0).then_some(excess as i32);
        Ok(Self { p, int_excess })
    }

    pub fn value(self) -> f64 {
        self.p
    }

    /// `|x|^{p-2}` for a magnitude `x ≥ 0`.
    #[inline]
    pub(crate) fn pow_excess(self, x: f64) -> f64 {
        match self.int_excess {
            Some(0) => 1.0,
            Some(m) => x.powi(m),
            None => x.powf(self.p - 2.0),
        }
    }

    /// `|x|^p` for a magnitude `x ≥ 0`.
    #[inline]
    pub(crate) fn pow(self, x: f64) -> f64 {
        self.pow_excess(x) * x * x
    }
}

/// Gradient vectors at the staggered locations of a grid.
#[derive(Debug, Clone)]
pub struct GradientField {
    grid: Arc<Grid>,
    components: Vec<f64>,
}

impl GradientField {
    /// Builds a gradient field from raw components (`dim` per location).
    pub fn new(grid: Arc<Grid>, components: Vec<f64>) -> Result<Self> {
        let expected = grid.cell_count() * grid.dim();
        if components.len() != expected {
            return Err(Error::FieldLength {
                expected,
                found: components.len(),
            });
        }
        Ok(Self { grid, components })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.cell_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, cell: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.components[cell * d..(cell + 1) * d]
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        self.components
            .chunks(self.grid.dim())
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    /// `(Σ_c w_c |f_c|^p)^{1/p}`.
    pub fn lp_norm(&self, p: PExponent) -> f64 {
        let w = self.grid.cell_weight();
        let sum: f64 = self.magnitudes().map(|m| w * p.pow(m)).sum();
        sum.powf(1.0 / p.value())
    }

    fn ensure_same_grid(&self, other: &GradientField) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Calls `f(cell, [gx, gy])` for every edge/cell in a fixed order.
#[inline]
pub(crate) fn for_each_cell_gradient(grid: &Grid, u: &[f64], mut f: impl FnMut(usize, [f64; 2])) {
    let n = grid.nodes_per_axis();
    match grid.dim() {
        1 => {
            let h = grid.spacing(0);
            for e in 0..n[0] - 1 {
                f(e, [(u[e + 1] - u[e]) / h, 0.0]);
            }
        }
        _ => {
            let (n1, h0, h1) = (n[1], grid.spacing(0), grid.spacing(1));
            let mut cell = 0;
            for i in 0..n[0] - 1 {
                for j in 0..n1 - 1 {
                    let a = u[i * n1 + j];
                    let b = u[(i + 1) * n1 + j];
                    let c = u[i * n1 + j + 1];
                    let d = u[(i + 1) * n1 + j + 1];
                    let gx = ((b - a) + (d - c)) / (2.0 * h0);
                    let gy = ((c - a) + (d - b)) / (2.0 * h1);
                    f(cell, [gx, gy]);
                    cell += 1;
                }
            }
        }
    }
}

/// Maximum of `|∇u|` over all cells.
pub(crate) fn max_gradient_magnitude(grid: &Grid, u: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for_each_cell_gradient(grid, u, |_, g| m = m.max(g[0].hypot(g[1])));
    m
}

/// `Σ_c w_c |∇u|_c^p`.
pub(crate) fn cell_power_sum(grid: &Grid, u: &[f64], p: PExponent) -> f64 {
    let w = grid.cell_weight();
    let mut sum = 0.0;
    for_each_cell_gradient(grid, u, |_, g| sum += w * p.pow(g[0].hypot(g[1])));
    sum
}

/// Writes `∂𝓔_h/∂u_k` into `out` (boundary entries zero), where
/// `𝓔_h(u) = (1/p) Σ_c w_c |∇u|_c^p`.
pub(crate) fn energy_gradient_into(grid: &Grid, u: &[f64], p: PExponent, out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    let n = grid.nodes_per_axis();
    match grid.dim() {
        1 => {
            let h = grid.spacing(0);
            // w_c * flux * ∂d/∂u = h * flux * (±1/h)
            for e in 0..n[0] - 1 {
                let d = (u[e + 1] - u[e]) / h;
                let flux = p.pow_excess(d.abs()) * d;
                out[e + 1] += flux;
                out[e] -= flux;
            }
            out[0] = 0.0;
            out[n[0] - 1] = 0.0;
        }
        _ => {
            let (n0, n1) = (n[0], n[1]);
            let (h0, h1) = (grid.spacing(0), grid.spacing(1));
            for i in 0..n0 - 1 {
                for j in 0..n1 - 1 {
                    let ia = i * n1 + j;
                    let ib = (i + 1) * n1 + j;
                    let ic = ia + 1;
                    let id = ib + 1;
                    let gx = ((u[ib] - u[ia]) + (u[id] - u[ic])) / (2.0 * h0);
                    let gy = ((u[ic] - u[ia]) + (u[id] - u[ib])) / (2.0 * h1);
                    let s = p.pow_excess(gx.hypot(gy));
                    // w_c = h0 h1, ∂gx/∂u = ±1/(2h0), ∂gy/∂u = ±1/(2h1)
                    let fx = 0.5 * h1 * s * gx;
                    let fy = 0.5 * h0 * s * gy;
                    out[ia] += -fx - fy;
                    out[ib] += fx - fy;
                    out[ic] += -fx + fy;
                    out[id] += fx + fy;
                }
            }
            for (k, v) in out.iter_mut().enumerate() {
                if grid.is_boundary(k) {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Writes the discrete `Δ_p u` into `out` (boundary entries zero).
pub(crate) fn p_laplacian_into(grid: &Grid, u: &[f64], p: PExponent, out: &mut [f64]) {
    energy_gradient_into(grid, u, p, out);
    let inv_w = -1.0 / grid.cell_weight();
    out.iter_mut().for_each(|x| *x *= inv_w);
}

pub fn gradient(u: &Field) -> GradientField {
    let grid = u.grid().clone();
    let dim = grid.dim();
    let mut components = Vec::with_capacity(grid.cell_count() * dim);
    for_each_cell_gradient(&grid, u.values(), |_, g| {
        components.extend_from_slice(&g[..dim]);
    });
    GradientField { grid, components }
}

/// Discrete `Δ_p u = div(|∇u|^{p−2}∇u)`; zero on boundary nodes.
pub fn p_laplacian(u: &Field, p: PExponent) -> Field {
    let grid = u.grid().clone();
    let mut out = vec![0.0; grid.node_count()];
    p_laplacian_into(&grid, u.values(), p, &mut out);
    Field::new(grid, out).expect("p-Laplacian of a finite field overflowed")
}

/// Trapezoid-weighted `(Σ w_i |u_i|^q)^{1/q}`, `q ≥ 1`.
pub fn lp_norm(u: &Field, q: f64) -> Result<f64> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::InvalidExponent(q));
    }
    let weights = u.grid().node_weights();
    let sum: f64 = weights
        .iter()
        .zip(u.values())
        .map(|(w, v)| w * v.abs().powf(q))
        .sum();
    Ok(sum.powf(1.0 / q))
}

pub fn sup_norm(u: &Field) -> f64 {
    u.max_abs()
}

/// `‖∇u‖_{L^p} = (Σ_c w_c |∇u|_c^p)^{1/p}`.
pub fn w1p_seminorm(u: &Field, p: PExponent) -> f64 {
    cell_power_sum(u.grid(), u.values(), p).powf(1.0 / p.value())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// Strong monotonicity gap
/// `⟨|a|^{p−2}a − |b|^{p−2}b, a − b⟩ − 2^{2−p}|a − b|^p`, non-negative for `p ≥ 2`.
pub fn ineq_a1_gap(a: &[f64], b: &[f64], p: PExponent) -> Result<f64> {
    check_dims(a, b)?;
    let (sa, sb) = (p.pow_excess(norm(a)), p.pow_excess(norm(b)));
    let inner: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (sa * x - sb * y) * (x - y))
        .sum();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    Ok(inner - 2f64.powf(2.0 - p.value()) * p.pow(norm(&diff)))
}

/// Constant used for the uniform convexity gap when none is supplied.
pub fn default_a2_constant(p: PExponent) -> f64 {
    2f64.powf(1.0 - p.value())
}

/// Uniform convexity gap
/// `|b|^p − |a|^p − p⟨|a|^{p−2}a, b − a⟩ − c|b − a|^p`.
pub fn ineq_a2_gap(a: &[f64], b: &[f64], p: PExponent, c: f64) -> Result<f64> {
    check_dims(a, b)?;
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidParameter(format!("convexity constant {c} not in (0, 1]")));
    }
    let sa = p.pow_excess(norm(a));
    let diff: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let lin = p.value() * sa * dot(a, &diff);
    Ok(p.pow(norm(b)) - p.pow(norm(a)) - lin - c * p.pow(norm(&diff)))
}

/// Both sides of the energy-difference estimate for gradient fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3Check {
    /// `∫ | |f|^p − |g|^p |`
    pub lhs: f64,
    /// `M^{p−1} ‖f − g‖_p`; the estimate holds with some `c` when `lhs ≤ c · scale`.
    pub scale: f64,
}

impl A3Check {
    pub fn ratio(&self) -> f64 {
        if self.scale == 0.0 {
            if self.lhs == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.lhs / self.scale
        }
    }
}

pub fn ineq_a3_check(
    f: &GradientField,
    g: &GradientField,
    p: PExponent,
    bound: f64,
) -> Result<A3Check> {
    f.ensure_same_grid(g)?;
    let slack = 1.0 + 1e-12;
    for norm in [f.lp_norm(p), g.lp_norm(p)] {
        if norm > bound * slack {
            return Err(Error::BoundExceeded { norm, bound });
        }
    }
    let w = f.grid.cell_weight();
    let lhs: f64 = f
        .magnitudes()
        .zip(g.magnitudes())
        .map(|(a, b)| w * (p.pow(a) - p.pow(b)).abs())
        .sum();
    let diff = GradientField {
        grid: f.grid.clone(),
        components: f
            .components
            .iter()
            .zip(&g.components)
            .map(|(a, b)| a - b)
            .collect(),
    };
    let scale = bound.powf(p.value() - 1.0) * diff.lp_norm(p);
    Ok(A3Check { lhs, scale })
}
