use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{sequence} overflowed at index {index}; {hint}")]
    Overflow {
        sequence: &'static str,
        index: usize,
        hint: String,
    },

    #[error("{sequence} underflowed at index {index}; {hint}")]
    Underflow {
        sequence: &'static str,
        index: usize,
        hint: String,
    },

    #[error("non-finite value in {sequence} at index {index}")]
    NonFinite { sequence: &'static str, index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Data(_) | Error::Parse { .. } | Error::Io(_) => 2,
            Error::Overflow { .. }
            | Error::Underflow { .. }
            | Error::NonFinite { .. }
            | Error::Numerical(_) => 3,
        }
    }

    pub fn is_numerical(&self) -> bool {
        self.exit_code() == 3
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}
