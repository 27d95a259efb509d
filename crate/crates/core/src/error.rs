use thiserror::Error;

/// Errors raised by the filtering, fusion and topology routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DbfError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("every cell of the density is zero")]
    AllZero,

    #[error("non-finite or negative density value at cell {0}")]
    NonFinite(usize),

    #[error("densities are defined on different grids")]
    GridMismatch,

    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{weights} weights supplied for {inputs} densities")]
    WeightMismatch { weights: usize, inputs: usize },

    #[error("invalid pool weights: {0}")]
    InvalidWeights(String),

    #[error("point {0:?} lies outside the grid")]
    OutOfBounds(Vec<f64>),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("graph is not symmetric")]
    NotSymmetric,

    #[error("graph is not connected")]
    Disconnected,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("matrix is not doubly stochastic (residual {0:.3e})")]
    NotDoublyStochastic(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "error budget exceeded: modeling/communication terms {budget:.6e} consume the step size {step:.6e}"
    )]
    ErrorBudgetExceeded { step: f64, budget: f64 },

    #[error("invalid transition kernel: {0}")]
    KernelInvalid(String),

    #[error("adjacency row {row} is invalid: {reason}")]
    WeightRowInvalid { row: usize, reason: String },

    #[error("state transition matrix is singular")]
    SingularF,

    #[error("M + Q^-1 is singular")]
    SingularSum,

    #[error("measurement covariance is singular")]
    SingularR,

    #[error("posterior information matrix is singular")]
    SingularPosterior,

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T, E = DbfError> = std::result::Result<T, E>;
