use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The inputs do not determine a value (e.g. composing zero data points).
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    /// Exact enumeration was requested for a game that is too large.
    #[error("capacity exceeded: {players} players exceeds the enumeration limit of {limit}; use the sampled evaluator")]
    Capacity { players: usize, limit: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
