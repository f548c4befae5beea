use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A certificate violates one of its defining inequalities. The message
    /// names the violated condition.
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    /// An argument is outside its documented range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A certification attempt failed; the message carries the best attempt.
    #[error("certification failed: {0}")]
    CertificationFailure(String),

    /// The requested computation exceeds a hard resource cap.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    /// Comparing a bound to an estimate produced under a different
    /// configuration.
    #[error("provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    /// A numerical routine failed in a way that should be unreachable for
    /// valid inputs; the message carries diagnostics.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
