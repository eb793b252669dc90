use thiserror::Error;

/// Errors surfaced by the numerical operators and the runner.
///
/// Non-convergence of iterative solvers is *not* an error: solvers return
/// their best iterate together with a `converged` flag so that a failed
/// descent is data, not a panic.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("multiplier symbol undefined at n = 0 applied to a field with nonzero mean (|c0| = {mean_abs:.3e})")]
    UndefinedZeroMode { mean_abs: f64 },

    #[error("evaluation on the singular locus of `{field}` at |z| = {radius:.3e}")]
    SingularLocus { field: String, radius: f64 },

    #[error("gate `{gate}` failed: measured {value:.3e} > tolerance {tol:.3e}")]
    GateFailed { gate: String, value: f64, tol: f64 },

    #[error("unknown builtin distribution `{0}`")]
    UnknownBuiltin(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing series `{requested}`; available: {available}")]
    MissingSeries { requested: String, available: String },

    #[error("unknown commutator kind `{0}` in Z-term descriptor")]
    UnknownZKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
