use thiserror::Error;

/// Errors returned across the library.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A shape or parameter is outside what the operation accepts.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two operands disagree on length.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// An input value violates the operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// Cosine or normalized scores requested against an all-zero vector.
    #[error("similarity undefined: {0}")]
    UndefinedSimilarity(String),

    /// The caller broke a documented contract (double release, retraining a
    /// released model, out-of-range hardware word).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
