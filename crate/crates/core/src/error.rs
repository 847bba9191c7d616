use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum TomoError {
    #[error("matrix is not Hermitian (max |M - M^dagger| = {max_deviation:.3e})")]
    NotHermitian { max_deviation: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is not a power of two")]
    NotQubitDimension(usize),

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    InvalidTrace { trace: f64 },

    #[error("state vector norm is {norm}, expected 1")]
    NotNormalized { norm: f64 },

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("qubit index {0} listed more than once")]
    DuplicateQubit(usize),

    #[error("parameter {name} = {value} outside [0, 1]")]
    OutOfUnitRange { name: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("no histogram consistent with observable {0}")]
    NoConsistentHistogram(String),

    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("linear system is rank deficient (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, TomoError>;

impl TomoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TomoError::Io {
            path: path.into(),
            cause: source,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        TomoError::Schema {
            location: location.into(),
            message: message.into(),
        }
    }
}
