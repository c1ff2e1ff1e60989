use thiserror::Error;

use crate::coflow::Trajectory;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree mismatch: expected {expected}, found {found}")]
    DegreeMismatch { expected: usize, found: usize },

    #[error("dimension {0} is outside the supported range 1..=9")]
    UnsupportedDimension(usize),

    #[error("invalid multi-index: {0}")]
    InvalidIndex(String),

    #[error("cannot contract a 0-form")]
    ContractScalar,

    #[error("matrix is singular")]
    Singular,

    #[error("metric is not symmetric positive definite")]
    NonPositiveMetric,

    #[error("volume form has norm {0}, expected 1")]
    BadVolume(f64),

    #[error("3-form is not stable")]
    NotStable,

    #[error("induced bilinear form is not positive definite")]
    NotPositive,

    #[error("3-form is not negative (lambda = {0})")]
    NotNegative(f64),

    #[error("forms are not compatible (residual {0})")]
    NotCompatible(f64),

    #[error("SU(3)-structure is not normalized (residual {0})")]
    NotNormalized(f64),

    #[error("2-form is degenerate")]
    DegenerateOmega,

    #[error("frame is not adapted: {0}")]
    FrameNotAdapted(String),

    #[error("endomorphism is not normal (|[A, A*]| = {0})")]
    NotNormal(f64),

    #[error("endomorphism does not preserve omega (|theta(A) omega| = {0})")]
    NotInSp(f64),

    #[error("time {t} lies outside the existence interval ({lo}, {hi})")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("blow-up between t = {} and t = {}", .interval.0, .interval.1)]
    BlowUp {
        interval: (f64, f64),
        trajectory: Box<Trajectory>,
    },

    #[error("tolerance not met: {0}")]
    ToleranceFailure(String),

    #[error("identity violated (residual {0})")]
    IdentityViolation(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
