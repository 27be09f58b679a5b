use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the library. Every variant maps onto one of the
/// CLI exit-code classes via [`Error::is_usage`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not Hermitian: max |M - M^dagger| = {max_asymmetry:.3e}")]
    NotHermitian { max_asymmetry: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability table: {0}")]
    InvalidTable(String),

    #[error("eigensolver did not converge")]
    EigenFailure,

    #[error("filter has zero amplitude on mode l={ell}")]
    ZeroAmplitude { ell: i32 },

    #[error("completeness violated: filter entry {value} at l={ell} exceeds 1")]
    Completeness { ell: i32, value: f64 },

    #[error("filter annihilates the state (success probability {0:.3e})")]
    ZeroSuccess(f64),

    #[error("projected weight {weight:.3e} on the {k}-dimensional subspace is too small")]
    UndefinedConstraint { k: usize, weight: f64 },

    #[error("constraint set is infeasible (worst residual {worst_residual:.4e} on {label})")]
    Infeasible { worst_residual: f64, label: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("missing count records: {0}")]
    Incomplete(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for errors caused by bad input files or arguments rather than by
    /// a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Json { .. } | Error::InvalidArgument(_) | Error::Size(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
