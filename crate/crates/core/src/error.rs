use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter count mismatch: circuit has {expected} slots, got {got} values")]
    ParamCount { expected: usize, got: usize },

    #[error("term {0} is not measurable in any provided basis")]
    Unmeasurable(String),

    #[error("no counts available for the requested estimate")]
    EmptyCounts,

    #[error("system of {0} sites is too large for a dense solve")]
    TooLarge(usize),

    #[error("degenerate ground state (gap {gap:e} <= tolerance {tol:e})")]
    Degenerate { gap: f64, tol: f64 },

    #[error("spectrum is truncated to {kept} of {total} states")]
    TruncatedSpectrum { kept: usize, total: usize },

    #[error("non-finite cost encountered at iteration {0}")]
    NonFiniteCost(usize),

    #[error("invalid Pauli frame at CNOT {0}: after-frame is not the conjugate of the before-frame")]
    InvalidFrame(usize),

    #[error("readout attenuation {factor} on qubit {qubit} is below the correction floor")]
    AttenuationTooSmall { qubit: usize, factor: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
