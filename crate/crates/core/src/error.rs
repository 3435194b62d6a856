use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The data lies in the measure-zero set removed from the sample space.
    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("quadrature did not converge (estimated error {residual:e}, tolerance {tolerance:e})")]
    Numeric { residual: f64, tolerance: f64 },

    #[error("enumeration exceeds the entry budget of {budget} leaves")]
    ResourceLimit { budget: usize },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
