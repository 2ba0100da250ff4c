//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the linear algebra, quantization, optimizer and
/// verification layers.
#[derive(Debug, Clone, Error)]
pub enum MuonError {
    /// Matrix/tensor dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Inputs contain NaN/Inf or otherwise invalid data.
    #[error("data error: {0}")]
    Data(String),

    /// An iterative routine failed to converge or produced non-finite output.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Matrix is (numerically) rank deficient.
    #[error("rank error: smallest singular value {smallest:.3e} (largest {largest:.3e})")]
    RankDeficient { smallest: f64, largest: f64 },

    /// A routine that requires a nonzero matrix received all zeros.
    #[error("zero-input error: {0}")]
    ZeroInput(String),

    /// Arguments violate a documented precondition or hypothesis.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training loss became NaN/Inf or exploded past the divergence cutoff.
    /// This is a reportable outcome, not a crash.
    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    /// A configuration file or variant tag could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem/serialization failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MuonError {
    fn from(e: std::io::Error) -> Self {
        MuonError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MuonError>;
