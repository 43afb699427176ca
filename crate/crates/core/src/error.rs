use thiserror::Error;

/// Errors raised by the estimation pipeline.
///
/// `Input` covers malformed or mismatched caller data, `Contract` covers
/// violated preconditions that indicate a bug in the calling code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("trip {trip_id} stop {stop_index}: {source}")]
    AtStop {
        trip_id: String,
        stop_index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("corpus invariant violated: {0}")]
    CorpusInvariant(String),

    #[error("leakage guard: {0}")]
    Leakage(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Whether the error stems from user-supplied data rather than an
    /// internal invariant failure.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Input(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::ModelFormat(_)
            | Error::Io(_) => true,
            Error::AtStop { source, .. } => source.is_user_error(),
            Error::Contract(_) | Error::CorpusInvariant(_) | Error::Leakage(_) => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
