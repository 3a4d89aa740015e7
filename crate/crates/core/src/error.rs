use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("stream index {index} out of range for m = {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("maximal-term sketches cannot process non-positive quantities (d = {0})")]
    UnsupportedDeletion(i64),

    #[error("incompatible sketches: {0}")]
    Incompatible(String),

    #[error("sketch has an empty slot")]
    EmptySketch,

    #[error("degenerate sketch: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Every Bernoulli bit is set; only a lower confidence bound is available.
    #[error("all {m} bits set, cardinality is at least {lower_bound:.3} at the requested level")]
    Saturated { m: usize, lower_bound: f64 },

    #[error("no convergence after {iterations} iterations (initial estimate {initial})")]
    NonConvergence { iterations: usize, initial: f64 },

    #[error("invalid sketch state: {0}")]
    InvalidState(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical procedures rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_)
                | Error::InsufficientData(_)
                | Error::Saturated { .. }
                | Error::NonConvergence { .. }
        )
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
