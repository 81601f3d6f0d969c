use thiserror::Error;

/// Errors produced by the analytic formulas, the streaming engine, the Monte
/// Carlo estimators, and the threshold search.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An exponential argument exceeded the overflow guard. Silent infinities
    /// would corrupt bound brackets and optimizer comparisons, so the guard
    /// reports the offending exponent instead.
    #[error("exponential argument {exponent} exceeds the overflow guard {limit}")]
    Overflow { exponent: f64, limit: f64 },

    /// A formula denominator evaluated to zero.
    #[error("zero denominator in {context}")]
    ZeroDenominator { context: &'static str },

    /// A parameter violated a documented precondition.
    #[error("invalid {name}: {value} (must be {requirement})")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    /// An observation increment was NaN or infinite.
    #[error("non-finite observation increment")]
    NonFiniteIncrement,

    /// A supplied limit factor fell outside [0, 1].
    #[error("limit factor {value} outside [0, 1]")]
    LimitOutOfRange { value: f64 },

    /// Richardson extrapolation of the limit exponent did not settle: the
    /// grid values are neither monotone nor tightly clustered.
    #[error("limit-factor extrapolation diverged: g = {values:?}")]
    ExtrapolationDiverged { values: Vec<f64> },

    /// The false-alarm constraint cannot be met inside the search box.
    #[error("no feasible design: gamma = {gamma} is unreachable in the search box")]
    Infeasible { gamma: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
