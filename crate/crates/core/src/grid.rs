//! Uniform tensor grids on boxes `(0, L₁) × … ` in one or two dimensions,
//! nodal fields living on them, and Dirichlet boundary handling.
//!
//! Nodes are stored row-major: in 2D the node `(i, j)` (axis 0 index `i`,
//! axis 1 index `j`) has flat index `i * n₁ + j`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor of a grid as it appears in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub nodes_per_axis: Vec<usize>,
    pub axis_lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<usize>,
    lengths: Vec<f64>,
}

impl Grid {
    pub fn new(dim: usize, nodes_per_axis: &[usize], axis_lengths: &[f64]) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if nodes_per_axis.len() != dim || axis_lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} node counts and lengths, got {} and {}",
                nodes_per_axis.len(),
                axis_lengths.len()
            )));
        }
        if let Some(n) = nodes_per_axis.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidGrid(format!(
                "{n} nodes on an axis leaves no interior node (need at least 3)"
            )));
        }
        if let Some(l) = axis_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidGrid(format!("axis length {l} must be positive")));
        }
        Ok(Self {
            nodes: nodes_per_axis.to_vec(),
            lengths: axis_lengths.to_vec(),
        })
    }

    pub fn from_spec(spec: &GridSpec) -> Result<Self> {
        Self::new(spec.dim, &spec.nodes_per_axis, &spec.axis_lengths)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            dim: self.dim(),
            nodes_per_axis: self.nodes.clone(),
            axis_lengths: self.lengths.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes
    }

    pub fn axis_lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / (self.nodes[axis] - 1) as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.spacing(k)).collect()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().product()
    }

    pub fn interior_count(&self) -> usize {
        self.nodes.iter().map(|n| n - 2).product()
    }

    /// Number of gradient locations: edges in 1D, cells in 2D.
    pub fn cell_count(&self) -> usize {
        self.nodes.iter().map(|n| n - 1).product()
    }

    /// Quadrature weight of one gradient location (`h` or `h₀h₁`).
    pub fn cell_weight(&self) -> f64 {
        self.spacings().into_iter().product()
    }

    /// Axis indices of a flat node index.
    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        match self.dim() {
            1 => [index, 0],
            _ => [index / self.nodes[1], index % self.nodes[1]],
        }
    }

    pub fn is_boundary(&self, index: usize) -> bool {
        let idx = self.multi_index(index);
        (0..self.dim()).any(|k| idx[k] == 0 || idx[k] == self.nodes[k] - 1)
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        (0..self.node_count()).map(|i| self.is_boundary(i)).collect()
    }

    /// Physical coordinates of a node; the second entry is 0 in 1D.
    pub fn coords(&self, index: usize) -> [f64; 2] {
        let idx = self.multi_index(index);
        let mut x = [0.0; 2];
        for k in 0..self.dim() {
            x[k] = idx[k] as f64 * self.spacing(k);
        }
        x
    }

    /// Trapezoid weights: product of per-axis weights, halved on end nodes.
    pub fn node_weights(&self) -> Vec<f64> {
        let axis_weight = |k: usize, i: usize| {
            let h = self.spacing(k);
            if i == 0 || i == self.nodes[k] - 1 {
                0.5 * h
            } else {
                h
            }
        };
        (0..self.node_count())
            .map(|n| {
                let idx = self.multi_index(n);
                (0..self.dim()).map(|k| axis_weight(k, idx[k])).product()
            })
            .collect()
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.same_grid(other) && self.values == other.values
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::FieldLength {
                expected: grid.node_count(),
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.node_count()];
        Self { grid, values }
    }

    /// Samples `f` at every node. Non-finite samples are rejected.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.node_count()).map(|i| f(grid.coords(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.ensure_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// First boundary node where `self` and `other` disagree, if any.
    pub fn boundary_mismatch(&self, other: &Field) -> Result<Option<usize>> {
        self.ensure_same_grid(other)?;
        Ok((0..self.values.len())
            .find(|&i| self.grid.is_boundary(i) && self.values[i] != other.values[i]))
    }

    pub fn to_json(&self) -> FieldJson {
        FieldJson {
            grid: self.grid.spec(),
            values: self.values.clone(),
        }
    }

    pub fn from_json(json: &FieldJson) -> Result<Self> {
        let grid = Arc::new(Grid::from_spec(&json.grid)?);
        Self::new(grid, json.values.clone())
    }
}

/// File form of a field: grid descriptor fields flattened next to the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldJson {
    #[serde(flatten)]
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Returns `field` with its boundary nodes replaced by those of `g`.
pub fn apply_dirichlet(field: &Field, g: &Field) -> Result<Field> {
    field.ensure_same_grid(g)?;
    let grid = field.grid();
    let values = field
        .values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(i, (&u, &b))| if grid.is_boundary(i) { b } else { u })
        .collect();
    Ok(Field {
        grid: field.grid.clone(),
        values,
    })
}

/// Boundary-consistent extension of `g` into the interior.
///
/// 1D: linear between the two end values. 2D: transfinite (Coons)
/// interpolation of the four edges, which reproduces bilinear data exactly.
pub fn interpolate_boundary(g: &Field) -> Field {
    let grid = g.grid().clone();
    let v = g.values();
    let n = grid.nodes_per_axis();
    let values = match grid.dim() {
        1 => {
            let last = n[0] - 1;
            (0..=last)
                .map(|i| {
                    let s = i as f64 / last as f64;
                    (1.0 - s) * v[0] + s * v[last]
                })
                .collect()
        }
        _ => {
            let (n0, n1) = (n[0], n[1]);
            let at = |i: usize, j: usize| v[i * n1 + j];
            let mut out = Vec::with_capacity(n0 * n1);
            for i in 0..n0 {
                let s = i as f64 / (n0 - 1) as f64;
                for j in 0..n1 {
                    let r = j as f64 / (n1 - 1) as f64;
                    let edges = (1.0 - s) * at(0, j)
                        + s * at(n0 - 1, j)
                        + (1.0 - r) * at(i, 0)
                        + r * at(i, n1 - 1);
                    let corners = (1.0 - s) * (1.0 - r) * at(0, 0)
                        + s * (1.0 - r) * at(n0 - 1, 0)
                        + (1.0 - s) * r * at(0, n1 - 1)
                        + s * r * at(n0 - 1, n1 - 1);
                    out.push(edges - corners);
                }
            }
            out
        }
    };
    let field = Field { grid, values };
    // Keep the boundary bit-identical to g.
    apply_dirichlet(&field, g).expect("same grid")
}
