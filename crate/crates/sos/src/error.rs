use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("relaxation degree {degree} is below constraint degree {required}")]
    Degree { degree: usize, required: usize },

    #[error("incomplete value table: expected {expected} hypercube points, got {got}")]
    IncompleteTable { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid pseudoexpectation: {0}")]
    InvalidPseudoExpectation(String),

    #[error("degenerate reweighting polynomial: E[W^2] = {0:e} is below the floor")]
    DegenerateWeight(f64),

    #[error("rounding failed: all {0} sample draws produced empty sets")]
    RoundingFailure(usize),

    #[error("{0}")]
    Invalid(String),

    #[error("SDP solver failed: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
