use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two vectors (or a vector and an expected size) disagree in length.
    #[error("dimension mismatch: {left} vs {right} ({context})")]
    Dimension {
        left: usize,
        right: usize,
        context: &'static str,
    },

    /// A NaN or infinity showed up where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state or action is outside the environment's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for this input family.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A configuration value is inconsistent or unknown.
    #[error("configuration error: {0}")]
    Config(String),

    /// No feasible policy exists for the given thresholds.
    #[error("infeasible: no policy satisfies all constraint thresholds")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(left: usize, right: usize, context: &'static str) -> Self {
        Error::Dimension {
            left,
            right,
            context,
        }
    }
}
