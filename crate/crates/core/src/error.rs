use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid log value {0} (NaN and +inf are not representable)")]
    InvalidLogValue(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("constrained sampler failed: {0}")]
    Sampler(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
