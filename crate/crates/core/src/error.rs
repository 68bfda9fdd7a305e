use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeisError {
    #[error("dimension mismatch: expected n = {expected}, found n = {found}")]
    Dimension { expected: usize, found: usize },
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("finite-difference step {step:e} underflows at this point")]
    StepUnderflow { step: f64 },
    #[error("field evaluation failed: {0}")]
    Evaluation(String),
    #[error("point at gauge distance {distance:e} lies inside the exclusion radius {radius:e} of field `{field}`")]
    InsideExclusion {
        field: String,
        distance: f64,
        radius: f64,
    },
    #[error("degenerate Gram matrix at chart node ({theta}, {phi})")]
    DegenerateGram { theta: f64, phi: f64 },
    #[error("cross-check residual {residual:e} exceeds tolerance {tolerance:e}")]
    CrossCheck { residual: f64, tolerance: f64 },
    #[error("need at least {needed} points, got {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("iterate lost positivity at iteration {iteration} (min value {min:e})")]
    LossOfPositivity { iteration: usize, min: f64 },
    #[error("line search failed: {0}")]
    LineSearch(String),
    #[error("linear solve stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolve { iterations: usize, residual: f64 },
    #[error("expansion is not of the form I + A: {0}")]
    NotIdentityPlus(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, HeisError>;

impl From<std::io::Error> for HeisError {
    fn from(e: std::io::Error) -> Self {
        HeisError::Io(e.to_string())
    }
}

impl From<csv::Error> for HeisError {
    fn from(e: csv::Error) -> Self {
        HeisError::Io(e.to_string())
    }
}
