use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Decode { path: PathBuf, offset: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("brute-force enumeration refused for n = {n} (limit {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unknown character {ch:?} and the vocabulary has no placeholder or UNK row")]
    UnknownChar { ch: char },

    #[error("non-finite loss for sentence {index} of the batch")]
    NonFinite { index: usize },

    #[error("training diverged in epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::slm::ModelParams>,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
