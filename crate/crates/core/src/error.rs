use thiserror::Error;

/// Errors raised by the observer design and simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    /// A pivot fell below the relative singularity threshold.
    #[error("singular matrix: pivot {pivot:.3e} at column {column} below threshold {threshold:.3e}")]
    SingularMatrix {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate domain: box has zero volume")]
    DegenerateDomain,

    #[error("duplicate eigenvalues: entries {first} and {second} are within {tolerance:e} of each other")]
    DuplicateEigenvalues {
        first: usize,
        second: usize,
        tolerance: f64,
    },

    #[error("eigenvalue {index} has modulus {modulus} >= 1")]
    UnstableEigenvalue { index: usize, modulus: f64 },

    #[error("eigenvalue sampling failed after {attempts} attempts")]
    SamplingFailure { attempts: usize },

    /// Iterate left the admissible region (backward stability or plant domain).
    #[error("domain escape at step {step}: |x| = {magnitude:.3e}")]
    DomainEscape { step: usize, magnitude: f64 },

    #[error("stability violation: |1 + lambda*dt| = {factor} >= 1")]
    StabilityViolation { factor: f64 },

    #[error("regression window [{t0}, {t1}] holds {rows} rows, need at least {required}")]
    EmptyWindow {
        t0: f64,
        t1: f64,
        rows: usize,
        required: usize,
    },

    #[error("estimation error is identically zero in the window, regression undefined")]
    AllZeroError,

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
