use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("center set is empty")]
    EmptyCenters,

    #[error("dimension mismatch: expected d={expected}, got d={got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("enumeration cap exceeded: {count} > {cap}; {hint}")]
    CapExceeded { count: u128, cap: u128, hint: String },

    #[error("arity mismatch: {0}")]
    ArityMismatch(String),

    #[error("coreset carries no movement certificate")]
    MissingCertificate,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
