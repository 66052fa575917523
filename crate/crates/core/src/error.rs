use thiserror::Error;

use crate::energy::EnergySample;
use crate::stationary::StationaryResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {found} values but grid has {expected} nodes")]
    FieldLength { expected: usize, found: usize },

    #[error("field value at node {index} is not finite")]
    NonFinite { index: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("boundary values differ at node {index}")]
    BoundaryMismatch { index: usize },

    #[error("exponent p = {0} is outside the admissible range")]
    InvalidExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("norm {norm} exceeds the bound M = {bound}")]
    BoundExceeded { norm: f64, bound: f64 },

    #[error("stationary solve did not reach tolerance: residual {:.3e} after {} iterations", .0.residual, .0.iterations)]
    StationaryNotConverged(Box<StationaryResult>),

    #[error("reference solution residual {residual:.3e} exceeds the admissible {limit:.3e}")]
    ReferenceResidual { residual: f64, limit: f64 },

    #[error("time integration unstable at t = {t} with dt = {dt}")]
    Unstable {
        t: f64,
        dt: f64,
        /// Samples emitted before the blow-up (empty when raised by a single step).
        samples: Vec<EnergySample>,
    },

    #[error("too few usable points for a fit: {found} (need {needed})")]
    TooFewPoints { found: usize, needed: usize },

    #[error("only {above} of {total} points lie above the numerical floor {floor:.3e}")]
    AtFloor { above: usize, total: usize, floor: f64 },

    #[error("histories describe different problems ({0} vs {1})")]
    FingerprintMismatch(String, String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
