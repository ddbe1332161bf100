use thiserror::Error;

/// Library-wide error type.
///
/// Guard violations carry the name of the violated guard so callers (and the
/// CLI) can report exactly which precondition failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("guard violated [{name}]: {detail}")]
    Guard { name: &'static str, detail: String },

    #[error("sketch fingerprint mismatch: expected {expected:#018x}, got {got:#018x}")]
    FingerprintMismatch { expected: u64, got: u64 },

    #[error("no exact oracle available for q={q} p={p} on a {rows}x{cols} matrix")]
    NoOracle {
        q: String,
        p: String,
        rows: usize,
        cols: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn guard(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Guard {
            name,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
