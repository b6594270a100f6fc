use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, arity).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A primitive produced NaN or infinity.
    #[error("numeric fault in {op}: non-finite value")]
    NumericFault { op: &'static str },

    /// An optimizer step met a NaN or infinite gradient.
    #[error("non-finite gradient for parameter {tensor}")]
    NonFiniteGradient { tensor: String },

    /// Input data admits no valid result (singular Gram, empty window, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("format error at byte offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    /// A key=value configuration is missing a key, has an unknown one, or
    /// holds an unparsable value.
    #[error("config error: {0}")]
    Config(String),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("checkpoint has bad magic {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("checkpoint version {0} is not supported")]
    UnknownVersion(u32),

    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
