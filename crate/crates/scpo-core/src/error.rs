//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, oracles, estimators and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A CMDP definition violates a structural invariant.
    #[error("invalid CMDP: {0}")]
    InvalidCmdp(String),

    /// A trajectory violates its bookkeeping invariants.
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    /// A policy returned a distribution that does not sum to one.
    #[error("policy distribution over state {state} sums to {sum}, expected 1")]
    NonNormalizedPolicy { state: usize, sum: f64 },

    /// Exhaustive enumeration would exceed the configured leaf budget.
    #[error("enumeration budget exceeded: {leaves} leaves > cap {cap}")]
    BudgetExceeded { leaves: u64, cap: u64 },

    /// A zero-probability ratio made a trust-region quantity undefined.
    #[error("undefined policy ratio at state {state}, action {action}")]
    UndefinedRatio { state: usize, action: usize },

    /// Costs are not on the declared grid, so the augmented space is not finite.
    #[error("costs are not grid-valued: {0}; quantize costs to a finite grid first")]
    QuantizationRequired(String),

    /// No surely-safe policy exists from the initial state.
    #[error("constrained problem infeasible: {0}")]
    Infeasible(String),

    /// Vector or tensor dimensions do not line up.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A gradient or loss became non-finite during training.
    #[error("numeric abort: {0}")]
    NumericAbort(String),

    /// Configuration value out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Text-format parsing failure.
    #[error("parse error: {0}")]
    Parse(String),

    /// Checkpoint encoding/decoding failure.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
