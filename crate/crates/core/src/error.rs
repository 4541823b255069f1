use thiserror::Error;

/// Errors surfaced by credit computations, rollout collection, training, and
/// the verification oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An exact oracle refuses to enumerate a state space this large.
    #[error("refusing exact computation: {0}")]
    TooLarge(String),

    /// A quantity required by an estimator is identically degenerate.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A stated precondition of a theoretical check does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A policy-gradient accumulation produced a non-finite value.
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),
}

pub type Result<T> = std::result::Result<T, Error>;
