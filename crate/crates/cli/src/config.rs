//! Experiment configuration: a TOML file with one table per concern.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dampflow_core::analysis::Window;
use dampflow_core::{
    apply_dirichlet, interpolate_boundary, Field, FlowMode, Grid, IntegratorConfig, PExponent, PParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] dampflow_core::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub nodes: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    pub a: f64,
}

/// Dirichlet data `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Zero,
    /// `g(x) = offset + Σ_k slope[k]·x_k`
    Affine {
        #[serde(default)]
        offset: f64,
        slope: Vec<f64>,
    },
    /// `g(x, y) = scale·((x − L₀/2)² − (y − L₁/2)²)`, 2D only.
    Saddle {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_modes() -> usize {
    4
}

/// Initial displacement `u₀`; every preset adds to the interpolant of `g`
/// and keeps the boundary values of `g` exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    InterpG,
    /// `+ amplitude·Π_k sin(π x_k / L_k)`
    LinearPlusSine {
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// `+ amplitude·Σ c_m·Π_k sin(m_k π x_k / L_k)` over modes `m_k ≤ modes`
    /// with coefficients drawn uniformly from `[−1, 1]/|m|²`.
    RandomBump {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "default_modes")]
        modes: usize,
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationarySection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_mode")]
    pub mode: FlowMode,
    pub t_final: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_safety")]
    pub dt_safety: f64,
}

fn default_mode() -> FlowMode {
    FlowMode::DampedSecondOrder
}
fn default_samples() -> usize {
    200
}
fn default_t_min() -> f64 {
    0.1
}
fn default_safety() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    /// Fit window `[t_lo, t_hi]`; defaults to `[min(10, t_final/2), t_final]`.
    pub window: Option<[f64; 2]>,
    /// Re-run once on a grid with `2n − 1` nodes per axis when the rate fit
    /// runs into the numerical floor.
    pub refine_on_floor: bool,
    /// Also run the first-order flow on the same problem and write a
    /// comparison table.
    pub compare_first_order: bool,
    pub thresholds: Vec<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { window: None, refine_on_floor: true, compare_first_order: false, thresholds: vec![1e-2, 1e-3, 1e-4] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// Write the full state every this many samples; 0 disables checkpoints.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub p: Option<Vec<f64>>,
    pub a: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub problem: ProblemSection,
    pub boundary: BoundarySpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub stationary: StationarySection,
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub samples: Option<usize>,
    pub t_final: Option<f64>,
    pub seed: Option<u64>,
}

/// Everything a run needs, built from a validated config.
pub struct Problem {
    pub grid: Arc<Grid>,
    pub p: PExponent,
    pub params: PParams,
    pub g: Field,
    pub u0: Field,
    pub integrator: IntegratorConfig,
    pub window: Window,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(dir) = &o.out {
            self.output.dir = Some(dir.clone());
        }
        if let Some(n) = o.samples {
            self.integrator.samples = n;
        }
        if let Some(t) = o.t_final {
            self.integrator.t_final = t;
        }
        if let Some(s) = o.seed {
            if let InitialSpec::RandomBump { seed, .. } = &mut self.initial {
                *seed = Some(s);
            }
        }
    }

    pub fn window(&self) -> Result<Window, ConfigError> {
        let t_final = self.integrator.t_final;
        let [lo, hi] = self.analysis.window.unwrap_or([10f64.min(0.5 * t_final), t_final]);
        Ok(Window::new(lo, hi)?)
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let s = &self.integrator;
        let mut cfg = IntegratorConfig::new(s.mode, s.t_final);
        cfg.samples = s.samples;
        cfg.t_min = s.t_min;
        cfg.dt_safety = s.dt_safety;
        cfg
    }

    /// Checks every constraint and builds the discrete problem.
    pub fn build(&self) -> Result<Problem, ConfigError> {
        let gs = &self.grid;
        if gs.nodes.len() != gs.dim || gs.lengths.len() != gs.dim {
            return invalid(format!(
                "grid.dim = {} but {} node counts and {} lengths given",
                gs.dim,
                gs.nodes.len(),
                gs.lengths.len()
            ));
        }
        let grid = Arc::new(Grid::new(gs.dim, &gs.nodes, &gs.lengths)?);
        let p = PExponent::new(self.problem.p)?;
        if !(self.problem.a > 0.0) || !self.problem.a.is_finite() {
            return invalid(format!("problem.a = {} must be positive", self.problem.a));
        }
        let params = PParams::new(p, self.problem.a)?;
        if !(self.stationary.tol > 0.0) || self.stationary.max_iter == 0 {
            return invalid("stationary.tol and stationary.max_iter must be positive");
        }
        let integrator = self.integrator();
        integrator.validate()?;
        let window = self.window()?;
        if let Some(t) = self.analysis.thresholds.iter().find(|t| !(**t > 0.0)) {
            return invalid(format!("analysis threshold {t} must be positive"));
        }

        let g = boundary_field(&self.boundary, &grid)?;
        let u0 = initial_field(&self.initial, &g)?;
        Ok(Problem { grid, p, params, g, u0, integrator, window })
    }

    /// The config with the whole grid refined: `n → 2n − 1` nodes per axis.
    pub fn refined(&self) -> Self {
        let mut out = self.clone();
        out.grid.nodes = self.grid.nodes.iter().map(|n| 2 * n - 1).collect();
        out
    }

    /// `(p, a)` pairs of a sweep in input order, duplicates removed; the
    /// second element lists the dropped duplicates.
    pub fn sweep_pairs(&self) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>), ConfigError> {
        let Some(sweep) = &self.sweep else {
            return invalid("config has no [sweep] table");
        };
        let ps = sweep.p.clone().unwrap_or_else(|| vec![self.problem.p]);
        let as_ = sweep.a.clone().unwrap_or_else(|| vec![self.problem.a]);
        if ps.is_empty() || as_.is_empty() {
            return invalid("sweep lists must be nonempty");
        }
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        let mut dropped = Vec::new();
        for &p in &ps {
            for &a in &as_ {
                if pairs.iter().any(|&(q, b)| q.to_bits() == p.to_bits() && b.to_bits() == a.to_bits()) {
                    dropped.push((p, a));
                } else {
                    pairs.push((p, a));
                }
            }
        }
        Ok((pairs, dropped))
    }

    /// Copy of the config for one sweep point, without the sweep table.
    pub fn with_pair(&self, p: f64, a: f64) -> Self {
        let mut out = self.clone();
        out.problem.p = p;
        out.problem.a = a;
        out.sweep = None;
        out
    }
}

pub fn boundary_field(spec: &BoundarySpec, grid: &Arc<Grid>) -> Result<Field, ConfigError> {
    let field = match spec {
        BoundarySpec::Zero => Field::zeros(grid.clone()),
        BoundarySpec::Affine { offset, slope } => {
            if slope.len() != grid.dim() {
                return invalid(format!(
                    "affine boundary needs {} slope entries, got {}",
                    grid.dim(),
                    slope.len()
                ));
            }
            let (offset, slope) = (*offset, slope.clone());
            Field::from_fn(grid.clone(), move |x| {
                offset + slope.iter().zip(x).map(|(s, xi)| s * xi).sum::<f64>()
            })?
        }
        BoundarySpec::Saddle { scale } => {
            if grid.dim() != 2 {
                return invalid("saddle boundary data needs a 2D grid");
            }
            let (cx, cy) = (0.5 * grid.axis_lengths()[0], 0.5 * grid.axis_lengths()[1]);
            let scale = *scale;
            Field::from_fn(grid.clone(), move |x| scale * ((x[0] - cx).powi(2) - (x[1] - cy).powi(2)))?
        }
    };
    Ok(field)
}

fn sine_mode(grid: &Grid, modes: [usize; 2], x: [f64; 2]) -> f64 {
    (0..grid.dim())
        .map(|k| (modes[k] as f64 * PI * x[k] / grid.axis_lengths()[k]).sin())
        .product()
}

pub fn initial_field(spec: &InitialSpec, g: &Field) -> Result<Field, ConfigError> {
    let grid = g.grid().clone();
    let base = interpolate_boundary(g);
    let bump = match spec {
        InitialSpec::InterpG => return Ok(base),
        InitialSpec::LinearPlusSine { amplitude } => {
            let amp = *amplitude;
            let gr = grid.clone();
            Field::from_fn(grid.clone(), move |x| amp * sine_mode(&gr, [1, 1], x))?
        }
        InitialSpec::RandomBump { amplitude, modes, seed } => {
            let Some(seed) = seed else {
                return invalid("initial.kind = \"random_bump\" needs a seed");
            };
            if *modes == 0 {
                return invalid("initial.modes must be positive");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let m1 = if grid.dim() == 2 { *modes } else { 1 };
            let mut terms = Vec::new();
            for i in 1..=*modes {
                for j in 1..=m1 {
                    let c: f64 = rng.gen_range(-1.0..=1.0);
                    let norm = (i * i + if grid.dim() == 2 { j * j } else { 0 }) as f64;
                    terms.push(([i, j], c / norm));
                }
            }
            let amp = *amplitude;
            let gr = grid.clone();
            Field::from_fn(grid.clone(), move |x| {
                amp * terms.iter().map(|(m, c)| c * sine_mode(&gr, *m, x)).sum::<f64>()
            })?
        }
    };
    let sum: Vec<f64> = base.values().iter().zip(bump.values()).map(|(b, s)| b + s).collect();
    Ok(apply_dirichlet(&Field::new(grid, sum)?, g)?)
}
