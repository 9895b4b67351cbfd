use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {index} lies outside the transform domain [-1/4, 1/4)^d")]
    Domain { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("window Fourier coefficient underflows to zero")]
    WindowUnderflow,
    #[error("dense oracle cap exceeded: n = {n} > {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("Cholesky breakdown at pivot {pivot}")]
    CholeskyBreakdown { pivot: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("coefficient tables are stale for the requested length scale")]
    StaleTables,
    #[error("invalid feature windows: {0}")]
    Windows(String),
    #[error("no features retained by the selection policy")]
    NoFeatures,
    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, got })
    }
}
