use thiserror::Error;

/// Errors raised by the solvers, the learner and the spec readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("matrix is not stable: spectral radius {spectral_radius}")]
    Unstable { spectral_radius: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("every controller destabilizes at least one member")]
    AllUnstable,

    #[error("simulator class is empty after pruning")]
    EmptyClass,

    #[error("regression dataset is empty")]
    EmptyDataset,

    #[error("regressor Gram matrix is numerically singular (min eigenvalue {min_eigenvalue:e})")]
    RankDeficient { min_eigenvalue: f64 },

    #[error("trace schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl Into<String>,
    got: impl Into<String>,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.into(),
        got: got.into(),
    }
}
