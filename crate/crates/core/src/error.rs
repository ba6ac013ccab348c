use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the documented domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Grid map or MDP tensors violate a structural invariant.
    #[error("malformed structure: {0}")]
    Structure(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// The chain does not satisfy the irreducible/aperiodic/positive-recurrent requirement.
    #[error("stationary distribution precondition failed: {0}")]
    Precondition(String),

    #[error("reducible chain: states {unreachable:?} do not communicate with the initial support")]
    Reducible { unreachable: Vec<usize> },

    #[error("periodic chain with period {period}")]
    Periodic { period: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Training diverged; the partial trace up to the failure is attached.
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}
