//! Stationary solve, evolution and analysis for one config, and sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use dampflow_core::analysis::{bound_exponent, compare_flows, FlowComparison, NumericalFloor, Window};
use dampflow_core::energy::EnergySample;
use dampflow_core::stationary::StationaryMeta;
use dampflow_core::{
    assess, evolve, evolve_observed, solve_stationary, Error as CoreError, FieldJson, FlowMode, GridSpec, History,
    Report, VerdictKind,
};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{fmt_f64, read_history, read_json, write_history, write_json, OutputError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILED: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;

pub const HISTORY_FILE: &str = "history.csv";
pub const RUN_FILE: &str = "run.json";
pub const VERDICT_FILE: &str = "verdict.json";
pub const U_STAR_FILE: &str = "u_star.json";
pub const STATIONARY_FILE: &str = "stationary.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Core(CoreError::Unstable { .. }) => EXIT_UNSTABLE,
            _ => EXIT_CONFIG,
        }
    }
}

/// Machine-readable cause of an aborted run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reason {
    Config { message: String },
    StationaryNotConverged { residual: f64, iterations: usize, message: String },
    Unstable { t: f64, dt: f64, message: String },
    Output { message: String },
}

impl From<&RunError> for Reason {
    fn from(e: &RunError) -> Self {
        let message = e.to_string();
        match e {
            RunError::Core(CoreError::Unstable { t, dt, .. }) => Reason::Unstable { t: *t, dt: *dt, message },
            RunError::Core(CoreError::StationaryNotConverged(r)) => {
                Reason::StationaryNotConverged { residual: r.residual, iterations: r.iterations, message }
            }
            RunError::Output(_) => Reason::Output { message },
            _ => Reason::Config { message },
        }
    }
}

#[derive(Debug, Serialize)]
struct FailureFile {
    verdict: &'static str,
    exit_code: i32,
    reason: Reason,
}

#[derive(Debug, Serialize)]
struct VerdictFile<'a> {
    exit_code: i32,
    refinements: usize,
    #[serde(flatten)]
    report: &'a Report,
}

/// Everything besides the samples needed to re-analyse a history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fingerprint: String,
    pub mode: FlowMode,
    pub p: f64,
    pub a: f64,
    pub grid: GridSpec,
    pub window: Window,
    pub initial: EnergySample,
    pub floor: NumericalFloor,
    pub stationary: StationaryMeta,
    pub steps: usize,
    pub refinements: usize,
    pub config: ExperimentConfig,
}

impl RunRecord {
    pub fn history(&self, samples: Vec<EnergySample>) -> History {
        History {
            fingerprint: self.fingerprint.clone(),
            mode: self.mode,
            p: self.p,
            a: self.a,
            initial: self.initial,
            samples,
            stationary_residual: self.stationary.residual,
            floor: self.floor,
            steps: self.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub exit_code: i32,
    /// `pass`, `fail`, `inconclusive`, `unstable` or `error`.
    pub status: String,
    pub w1p_slope: Option<f64>,
    pub refinements: usize,
}

pub fn exit_code_for(verdict: VerdictKind) -> i32 {
    match verdict {
        VerdictKind::Pass | VerdictKind::Inconclusive => EXIT_OK,
        VerdictKind::Fail => EXIT_FAILED,
    }
}

fn status_of(verdict: VerdictKind) -> &'static str {
    match verdict {
        VerdictKind::Pass => "pass",
        VerdictKind::Fail => "fail",
        VerdictKind::Inconclusive => "inconclusive",
    }
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    index: usize,
    t: f64,
    u: &'a FieldJson,
    ut: &'a FieldJson,
}

/// Runs one experiment into `out`. Never panics on bad input: failures are
/// written to `verdict.json` and reported through the exit code.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> RunOutcome {
    match try_run(cfg, out) {
        Ok(outcome) => outcome,
        Err(e) => {
            let exit_code = e.exit_code();
            let verdict = if exit_code == EXIT_UNSTABLE { "unstable" } else { "error" };
            warn!("{}: {e}", out.display());
            let file = FailureFile { verdict, exit_code, reason: Reason::from(&e) };
            if fs::create_dir_all(out).is_ok() {
                if let Err(w) = write_json(&out.join(VERDICT_FILE), &file) {
                    warn!("cannot record failure: {w}");
                }
            }
            RunOutcome { dir: out.to_path_buf(), exit_code, status: verdict.into(), w1p_slope: None, refinements: 0 }
        }
    }
}

fn try_run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome, RunError> {
    fs::create_dir_all(out).map_err(|source| OutputError::Io { path: out.display().to_string(), source })?;
    let mut current = cfg.clone();
    let mut refinements = 0;
    loop {
        let problem = current.build()?;
        info!(
            "{}: p = {}, a = {}, {:?} nodes, mode {:?}",
            out.display(),
            current.problem.p,
            current.problem.a,
            current.grid.nodes,
            problem.integrator.mode
        );
        let reference = solve_stationary(&problem.g, problem.p, current.stationary.tol, current.stationary.max_iter)?;
        info!("stationary residual {:.3e} after {} iterations", reference.residual, reference.iterations);
        write_json(&out.join(U_STAR_FILE), &reference.u_star.to_json())?;
        write_json(&out.join(STATIONARY_FILE), &reference.meta())?;

        let every = current.output.checkpoint_every;
        let ckpt_dir = out.join("checkpoints");
        if every > 0 {
            fs::create_dir_all(&ckpt_dir)
                .map_err(|source| OutputError::Io { path: ckpt_dir.display().to_string(), source })?;
        }
        let mut ckpt_error = None;
        let result = evolve_observed(&problem.u0, &problem.g, &reference, &problem.params, &problem.integrator, |k, s| {
            if every == 0 || k % every != 0 || ckpt_error.is_some() {
                return;
            }
            let (u, ut) = (s.u.to_json(), s.ut.to_json());
            let ck = Checkpoint { index: k, t: s.t, u: &u, ut: &ut };
            if let Err(e) = write_json(&ckpt_dir.join(format!("sample_{k:04}.json")), &ck) {
                ckpt_error = Some(e);
            }
        });
        if let Some(e) = ckpt_error {
            return Err(e.into());
        }
        let history = match result {
            Ok(h) => h,
            Err(CoreError::Unstable { t, dt, samples }) => {
                write_history(&out.join(HISTORY_FILE), &samples)?;
                return Err(CoreError::Unstable { t, dt, samples: Vec::new() }.into());
            }
            Err(e) => return Err(e.into()),
        };
        write_history(&out.join(HISTORY_FILE), &history.samples)?;

        let report = assess(&history, problem.window);
        if report.verdict == VerdictKind::Inconclusive
            && report.at_floor()
            && history.p > 2.0
            && current.analysis.refine_on_floor
            && refinements == 0
        {
            warn!("{}: rate fit at the numerical floor, repeating on a refined grid", out.display());
            current = current.refined();
            refinements += 1;
            continue;
        }

        if current.analysis.compare_first_order && problem.integrator.mode == FlowMode::DampedSecondOrder {
            let mut first = problem.integrator.clone();
            first.mode = FlowMode::FirstOrder;
            let baseline = evolve(&problem.u0, &problem.g, &reference, &problem.params, &first)?;
            let comparison = comparison_table(&baseline, &history, &problem.window, &current.analysis.thresholds)?;
            write_json(&out.join(COMPARISON_FILE), &comparison)?;
        }

        let exit_code = exit_code_for(report.verdict);
        let record = RunRecord {
            fingerprint: history.fingerprint.clone(),
            mode: history.mode,
            p: history.p,
            a: history.a,
            grid: problem.grid.spec(),
            window: problem.window,
            initial: history.initial,
            floor: history.floor,
            stationary: reference.meta(),
            steps: history.steps,
            refinements,
            config: current.clone(),
        };
        write_json(&out.join(RUN_FILE), &record)?;
        write_json(&out.join(VERDICT_FILE), &VerdictFile { exit_code, refinements, report: &report })?;
        info!("{}: verdict {:?}", out.display(), report.verdict);
        for r in &report.reasons {
            info!("  {r}");
        }
        return Ok(RunOutcome {
            dir: out.to_path_buf(),
            exit_code,
            status: status_of(report.verdict).into(),
            w1p_slope: report.w1p_slope(),
            refinements,
        });
    }
}

fn comparison_table(
    first_order: &History,
    damped: &History,
    window: &Window,
    thresholds: &[f64],
) -> Result<FlowComparison, CoreError> {
    let mid = (window.t_lo * window.t_hi).sqrt();
    let windows = [*window, Window::new(window.t_lo, mid)?, Window::new(mid, window.t_hi)?];
    compare_flows(first_order, damped, dampflow_core::Column::W1pErr, &windows, thresholds)
}

/// Re-analyses an existing history with the metadata in the sibling
/// `run.json`.
pub fn verify_history(csv: &Path) -> Result<Report, RunError> {
    let dir = csv.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let record: RunRecord = read_json(&dir.join(RUN_FILE))?;
    let samples = read_history(csv)?;
    Ok(assess(&record.history(samples), record.window))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub a: f64,
    pub outcome: RunOutcome,
}

impl SweepRow {
    fn bound_label(&self) -> String {
        match bound_exponent(self.p) {
            Some(b) => fmt_f64(b),
            None => "exp-model".into(),
        }
    }
}

/// Name of a sweep point's output directory.
pub fn sweep_dir(p: f64, a: f64) -> String {
    format!("p{p}_a{a}")
}

/// Runs every `(p, a)` pair of the sweep in parallel and writes
/// `summary.csv` in input order.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepRow>, RunError> {
    let (pairs, dropped) = cfg.sweep_pairs()?;
    for (p, a) in dropped {
        warn!("duplicate sweep point p = {p}, a = {a} ignored");
    }
    fs::create_dir_all(out).map_err(|source| OutputError::Io { path: out.display().to_string(), source })?;
    let rows: Vec<SweepRow> = pairs
        .par_iter()
        .map(|&(p, a)| {
            let sub = cfg.with_pair(p, a);
            let outcome = run_experiment(&sub, &out.join(sweep_dir(p, a)));
            SweepRow { p, a, outcome }
        })
        .collect();
    write_summary(&out.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

pub fn sweep_exit_code(rows: &[SweepRow]) -> i32 {
    if rows.iter().all(|r| r.outcome.exit_code == EXIT_OK) {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn write_summary(path: &Path, rows: &[SweepRow]) -> Result<(), OutputError> {
    let csv_err = |source| OutputError::Csv { path: path.display().to_string(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["p", "a", "fitted_slope_w1p", "bound_exponent", "verdict"]).map_err(csv_err)?;
    for r in rows {
        let slope = r.outcome.w1p_slope.map(fmt_f64).unwrap_or_default();
        w.write_record([fmt_f64(r.p), fmt_f64(r.a), slope, r.bound_label(), r.outcome.status.clone()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|source| OutputError::Io { path: path.display().to_string(), source })
}
