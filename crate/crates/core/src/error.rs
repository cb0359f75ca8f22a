//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by kernel, measure, field, and integrator operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{op} is not supported for the {family} kernel family")]
    UnsupportedFamily {
        family: &'static str,
        op: &'static str,
    },

    #[error("kernel not differentiable at origin")]
    NotDifferentiableAtOrigin,

    #[error("singular denominator in {context}: value {value:e} below floor")]
    SingularDenominator { context: &'static str, value: f64 },

    #[error("unsupported combination: {0}")]
    UnsupportedCombination(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("unsupported dimension {dim} for {op}")]
    UnsupportedDimension { dim: usize, op: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error(
        "collision guard tripped: particles {i} and {j} at distance {dist:e} (guard {guard:e})"
    )]
    CollisionGuard {
        i: usize,
        j: usize,
        dist: f64,
        guard: f64,
    },

    #[error("integration aborted at t = {t}: {source}")]
    IntegrationAbort {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("at particle {index}: {source}")]
    AtParticle {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
