//! Error type shared across the workbench.

use thiserror::Error;

/// Unified error for corpus handling, encoding, training, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; the message names the violated bound.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an otherwise valid call (dimension mismatch,
    /// empty token list, out-of-range id, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A referenced id does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// A data file failed to parse; `line` is 1-based.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Cross-referenced data is inconsistent (qrels naming unknown ids,
    /// missing expansions, teacher/corpus mismatches, ...).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Checkpoint or cache bytes are malformed.
    #[error("serialization error: {0}")]
    Serialization(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Diverged {
        epoch: usize,
        batch: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
