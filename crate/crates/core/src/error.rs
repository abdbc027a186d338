use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("recorded optimum is inconsistent: psi(x_star) = {evaluated}, psi_star = {recorded}")]
    InconsistentOptimum { evaluated: f64, recorded: f64 },
    #[error("invalid problem data: {0}")]
    InvalidData(String),
}

/// A parameter that violates the solver's interval constraints.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid solver parameter `{field}`: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

/// Contract violations detected before the iteration starts. Runtime
/// failures (backtrack cap, non-finite values) are reported through
/// [`RunStatus`](crate::RunStatus) together with the partial trace.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("starting point has length {got}, problem dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("starting point is outside dom(phi)")]
    InfeasibleStart,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticError {
    #[error("non-positive gap {value} at index {index} of the tail window")]
    NonpositiveTail { index: usize, value: f64 },
    #[error("reference increased by {amount} between records {index} and {}", index + 1)]
    NegativeGap { index: usize, amount: f64 },
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("tail fraction {0} is outside (0, 1)")]
    BadTailFraction(f64),
}
