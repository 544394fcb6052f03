use thiserror::Error;

/// Errors produced by the simulation and analysis engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("node {l} is not a neighbor of node {k}")]
    NotAnEdge { k: usize, l: usize },

    #[error("topology generation failed after {attempts} attempts: {reason}")]
    TopologyInfeasible { attempts: usize, reason: String },

    #[error("malformed topology text at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("consultation budget {budget} exceeds degree {degree} at node {node}")]
    BudgetExceedsDegree { node: usize, budget: usize, degree: usize },

    #[error("enumeration budget exceeded: {outcomes} joint outcomes (limit {limit})")]
    EnumerationBudget { outcomes: f64, limit: f64 },

    #[error("operator too large for dense materialization: {size} x {size}")]
    DenseTooLarge { size: usize },

    #[error("not mean-square stable: spectral radius of FD is {rho}")]
    MeanSquareUnstable { rho: f64 },

    #[error("iteration did not converge after {iterations} steps (last relative change {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("{divergent} of {trials} trials diverged under a mean-stable configuration")]
    UnexpectedDivergence { divergent: usize, trials: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
