use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the workbench.
///
/// The variants fall into three classes that the command line maps onto
/// exit codes: contract violations (bad arguments, violated preconditions,
/// malformed files), numeric failures (non-finite values), and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Tensor shapes or names do not line up.
    #[error("structural mismatch: {0}")]
    Structural(String),

    /// A value became NaN or infinite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unknown domain {domain} (model has {available})")]
    UnknownDomain { domain: usize, available: usize },

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    BadVersion {
        what: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("truncated {what}: {detail}")]
    Truncated { what: &'static str, detail: String },

    #[error("config fingerprint mismatch: file has {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("i/o error on {path}: {source}")]
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

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for non-finite-value failures, as opposed to contract or I/O
    /// problems.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
