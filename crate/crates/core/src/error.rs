use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("accuracy target missed: achieved {achieved:e}, requested {requested:e}")]
    Accuracy { achieved: f64, requested: f64 },

    #[error("invalid input: {0}")]
    Usage(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("envelope violated at node {node} (t = {t:e}): value {value:e} outside [{lower:e}, {upper:e}]")]
    EnvelopeViolation {
        node: usize,
        t: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
