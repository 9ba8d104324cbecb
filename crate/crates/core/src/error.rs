use std::path::PathBuf;

use crate::data::seqz::SeqzError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, divisibility, stale caches).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid model name {name:?}: unexpected token {token:?}")]
    ModelName { name: String, token: String },

    #[error("{path}:{line}: {msg}")]
    Csv {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("non-finite gradient entry in {0}")]
    NonFiniteGradient(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Seqz(#[from] SeqzError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for errors caused by invalid usage rather than bad input files.
    pub fn is_contract_violation(&self) -> bool {
        matches!(
            self,
            Error::Contract(_) | Error::NonFiniteGradient(_) | Error::Diverged(_)
        )
    }
}
