use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("derivative order {requested} exceeds the supported maximum {max}")]
    DerivativeOrder { requested: usize, max: usize },

    #[error("point outside the closed domain: {0}")]
    OutOfDomain(String),

    #[error("degenerate Jacobian: vertical stretch derivative {0:e}")]
    DegenerateJacobian(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("closed-form and quadrature disagree for mode {mode}: relative gap {gap:e}")]
    QuadratureMismatch { mode: String, gap: f64 },

    #[error("factorization failed at pivot {pivot}: {reason}")]
    Factorization { pivot: usize, reason: String },

    #[error("eigensolver did not converge after {iterations} iterations (max residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("constrained degree of freedom: {0}")]
    ConstrainedDof(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
