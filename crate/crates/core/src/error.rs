//! Error type shared by every solver and front-end in the crate.
//!
//! Display messages start with a stable tag (`NotSymmetric:`, `BlowUp:`,
//! ...) so scripts and CI can grep for the failure kind without parsing
//! the rest of the sentence.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("DimensionMismatch: {what} must be {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: String,
        got: String,
    },

    #[error("NotSymmetric: {what} deviates from symmetry by {defect:.3e} (allowed {tol:.3e})")]
    NotSymmetric { what: String, defect: f64, tol: f64 },

    #[error("NotPSD: {what} has minimum eigenvalue {min_eig:.3e} (allowed {tol:.3e})")]
    NotPsd {
        what: String,
        min_eig: f64,
        tol: f64,
    },

    #[error("Inadmissible: no admissible condition set holds; {details}")]
    Inadmissible { details: String },

    #[error("OutOfRange: t = {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error("GridAlignment: no uniform grid with at most {max_steps} steps hits every breakpoint")]
    GridAlignment { max_steps: usize },

    #[error("GridMismatch: {details}")]
    GridMismatch { details: String },

    #[error("SingularLambda2: Lambda_2 has no Cholesky factor at t = {t}")]
    SingularLambda2 { t: f64 },

    #[error("SingularLambdaHat: Lambda_hat has no Cholesky factor at t = {t}")]
    SingularLambdaHat { t: f64 },

    #[error("SingularLambda: R + D'KD has no Cholesky factor at t = {t}")]
    SingularLambda { t: f64 },

    #[error("BlowUp: {what} exceeded Frobenius norm 1e12 at t = {t}{}", path.map(|p| format!(" on path {p}")).unwrap_or_default())]
    BlowUp {
        what: String,
        t: f64,
        path: Option<usize>,
    },

    #[error("NotPositive: {what} has minimum eigenvalue {min_eig:.3e} at t = {t}")]
    NotPositive { what: String, t: f64, min_eig: f64 },

    #[error(
        "NoConvergence: horizon extension did not settle by t = {reached}; \
         the system may not be mean-square stabilizable through the random control channel alone"
    )]
    NoConvergence { reached: f64 },

    #[error("AreResidual: stationary residual {residual:.3e} exceeds limit {limit:.3e}")]
    AreResidual { residual: f64, limit: f64 },

    #[error("RepresentationMismatch: gain representations disagree by {defect:.3e} at t = {t}")]
    RepresentationMismatch { t: f64, defect: f64 },

    #[error("EmptyBundle: trajectory bundle contains no paths")]
    EmptyBundle,

    #[error("Parse: {0}")]
    Parse(String),

    #[error("Io: {0}")]
    Io(#[from] std::io::Error),

    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand used by shape checks all over the model layer.
    pub(crate) fn dims(what: impl Into<String>, expected: String, got: String) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }
}
