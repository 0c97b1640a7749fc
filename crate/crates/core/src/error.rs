use thiserror::Error;

use crate::C64;

pub type Result<T, E = HillError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HillError {
    #[error("invalid potential document: {0}")]
    Schema(String),

    #[error("matrix entry is not symmetric: S12 = {s12}, S21 = {s21}")]
    NonSymmetric { s12: f64, s21: f64 },

    #[error("delta location {0} outside [0, 1)")]
    DeltaLocation(f64),

    #[error("delta locations are not distinct: {0}")]
    DuplicateDelta(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("propagation did not reach tolerance {requested:e}: achieved {achieved:e} with {steps} steps")]
    ToleranceBudget {
        requested: f64,
        achieved: f64,
        steps: usize,
    },

    #[error("series iteration is only defined for potentials without delta terms")]
    SeriesUnsupported,

    #[error("continuation path passes within tolerance of a zero of rho near {0}")]
    BranchPointOnPath(C64),

    #[error("no branch anchor available: {0}")]
    NoAnchor(String),

    #[error("target function vanishes on the contour near {0}")]
    ZeroOnContour(C64),

    #[error("target function is identically zero on the contour")]
    IdenticallyZero,

    #[error("winding number {value} is not within {tol} of an integer")]
    NonIntegerWinding { value: f64, tol: f64 },

    #[error("band edge not separable at grid resolution in [{lo}, {hi}]")]
    EdgeUnresolved { lo: f64, hi: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("zero count mismatch: contour reports {expected}, resolved {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
