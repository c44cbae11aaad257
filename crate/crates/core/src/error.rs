use thiserror::Error;

/// Errors raised by the aggregation, attack, training and analysis layers.
///
/// Variants fall into two families: malformed input (`InvalidInput`,
/// `DimensionMismatch`, ...) and violated rule preconditions
/// (`Constraint`). Front ends map them to different exit codes via
/// [`Error::is_constraint`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(msg.into())
    }

    /// True when the error is a rule or theorem precondition violation,
    /// as opposed to malformed input.
    pub fn is_constraint(&self) -> bool {
        match self {
            Error::Constraint(_) => true,
            Error::Round { source, .. } => source.is_constraint(),
            _ => false,
        }
    }

    /// The training round the error was raised in, if any.
    pub fn round(&self) -> Option<usize> {
        match self {
            Error::Round { round, .. } => Some(*round),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
