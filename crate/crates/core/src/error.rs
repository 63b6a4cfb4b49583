//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An input slice or matrix has the wrong dimensions.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A CIR text file could not be parsed.
    #[error("channel file: {0}")]
    ChannelFile(String),

    /// Underlying file-system failure.
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    /// A covariance matrix failed the positive-semidefinite check.
    #[error("covariance not positive semidefinite: {0}")]
    NonPsd(String),

    /// Every coefficient was pruned; the sparse prior degenerated.
    #[error("all coefficients pruned")]
    AllPruned,

    /// A numeric operation produced a non-finite or impossible value.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Stable machine-parsable category slug, used by the CLI for exit
    /// diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "config-invalid",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::ChannelFile(_) => "channel-file",
            Error::Io(_) => "io",
            Error::NonPsd(_) => "non-psd",
            Error::AllPruned => "all-pruned",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
