use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("search space of {size} assignments exceeds the limit of {limit}")]
    SearchSpace { size: f64, limit: f64 },

    #[error("no convergence after {updates} updates (guard {guard})")]
    NonConvergence { updates: u64, guard: u64 },

    #[error("no active cluster to schedule")]
    NoActiveCluster,

    #[error("{0} is outside the function's domain")]
    Domain(String),

    #[error("insufficient samples: {0}")]
    Statistics(String),

    #[error("decay fit failed: {0}")]
    Fit(String),

    #[error("topology document: {0}")]
    Document(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
