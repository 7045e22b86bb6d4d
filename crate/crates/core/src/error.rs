//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for model construction, analysis, and optimization.
#[derive(Debug, Error)]
pub enum Error {
    /// Floorplan geometry is unusable: zero-sized grid, overlapping chiplets,
    /// out-of-bounds placement, or mismatched matrix dimensions.
    #[error("invalid floorplan: {0}")]
    InvalidFloorplan(String),

    /// A decap layout breaks the floorplan contract (occupied cell, bad shape,
    /// or level outside the allowed step range).
    #[error("layout violation: {0}")]
    LayoutViolation(String),

    /// The MNA matrix is singular; reported with the first node (or auxiliary
    /// variable) that the factorization could not pivot.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// A transient solve produced a non-finite value.
    #[error("transient diverged at step {step} (t = {time_s} s)")]
    Divergence { step: usize, time_s: f64 },

    /// A ratio-based metric was requested against a zero baseline
    /// (e.g. voltage-violation reward with no initial violation).
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    /// Non-finite number surfaced outside the transient solver
    /// (network activations, reward arithmetic, gradient updates).
    #[error("numeric fault: {0}")]
    NumericFault(String),

    /// A case or layout file failed schema or semantic validation.
    #[error("invalid input file: {0}")]
    InvalidInput(String),

    /// Parameter set fails a physical sanity check (non-positive value,
    /// fraction outside its range, weights that do not sum to one).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
