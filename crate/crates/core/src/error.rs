use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied data violates a precondition.
    #[error("invalid input: {0}")]
    Input(String),

    /// A case or parameter file does not match the expected schema.
    /// `pointer` is a JSON-pointer-style location inside the document.
    #[error("schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },

    /// The optimization model admits no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Something that should not happen did (non-convergence, non-finite values).
    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub(crate) fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Prefixes the message with extra context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Input(m) => Error::Input(format!("{ctx}: {m}")),
            Error::Schema { pointer, message } => Error::Schema {
                pointer,
                message: format!("{ctx}: {message}"),
            },
            Error::Infeasible(m) => Error::Infeasible(format!("{ctx}: {m}")),
            Error::Internal(m) => Error::Internal(format!("{ctx}: {m}")),
            other => other,
        }
    }
}
