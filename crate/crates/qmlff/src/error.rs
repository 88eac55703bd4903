//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..=8")]
    QubitCount(usize),

    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitIndex { index: usize, num_qubits: usize },

    #[error("qubit {0} used more than once")]
    DuplicateQubit(usize),

    #[error("bitstring length {got} does not match qubit count {expected}")]
    BitstringLength { expected: usize, got: usize },

    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),

    #[error("invalid gate targets: {0}")]
    InvalidTargets(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("weight shapes do not match architecture: {0}")]
    ShapeMismatch(String),

    #[error("input violates the centering constraint (deviation {0:.3e} angstrom)")]
    Centering(f64),

    #[error("expected {expected} atoms, got {got}")]
    AtomCount { expected: usize, got: usize },

    #[error("unexpected species ordering: {0}")]
    Species(String),

    #[error("dataset error at line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("cannot fit scaler: {0}")]
    DegenerateLabels(String),

    #[error("force labels required by the loss are missing")]
    MissingForces,

    #[error("noise standard deviation must be non-negative, got {0}")]
    NegativeNoise(f64),

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("unsupported checkpoint format version {0}")]
    CheckpointVersion(u32),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
