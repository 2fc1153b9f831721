//! Error type shared across the model, solvers, and file loaders.

use thiserror::Error;

/// Unified error for model construction, solving, and I/O.
#[derive(Debug, Error)]
pub enum EpiError {
    /// A parameter fell outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A derived quantity degenerated (zero divisor, empty population).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// The adaptive integrator could not satisfy the tolerance.
    #[error("step size underflow at t = {t:.6e} (dt = {dt:.6e})")]
    StepSizeUnderflow { t: f64, dt: f64 },

    /// A state component left the physical region by more than the tolerance.
    #[error("state component {component} reached {value:.6e} at t = {t:.6}")]
    NegativeState {
        component: &'static str,
        value: f64,
        t: f64,
    },

    /// Polynomial coefficient recovery did not reproduce its samples.
    #[error("coefficient recovery failed: {0}")]
    CoefficientRecovery(String),

    /// An iterative linear solve exceeded its iteration budget.
    #[error("linear solver stalled: {0}")]
    LinearSolver(String),

    /// Structured input (GeoJSON, CSV, config) could not be parsed.
    #[error("parse error in {source_name}: {detail}")]
    Parse { source_name: String, detail: String },

    /// Rasterization produced no active cells.
    #[error("rasterized mask is empty: no cell center lies inside the geometry")]
    EmptyMask,

    /// A named region was not present in the geometry file.
    #[error("region {0:?} not found in geometry")]
    UnknownRegion(String),

    /// An initial-condition peak center fell outside the active mask.
    #[error("peak center ({x:.4}, {y:.4}) lies outside the active mask")]
    PeakOutsideMask { x: f64, y: f64 },

    /// Observation data failed validation (ordering, positivity, length).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The optimizer was asked for something impossible (empty free set, bad bounds).
    #[error("calibration setup error: {0}")]
    CalibrationSetup(String),

    /// Underlying filesystem failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EpiError {
    /// Builds a parse error tagged with the offending source.
    pub fn parse(source_name: impl Into<String>, detail: impl Into<String>) -> Self {
        EpiError::Parse {
            source_name: source_name.into(),
            detail: detail.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, EpiError>;
