use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum OdpError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image format error: {0}")]
    Format(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("incompatible checkpoint: {0}")]
    Compatibility(String),
}

impl OdpError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OdpError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            OdpError::Config(_)
            | OdpError::Shape(_)
            | OdpError::Input(_)
            | OdpError::Unsupported(_)
            | OdpError::Domain(_)
            | OdpError::Compatibility(_) => 2,
            OdpError::Divergence(_) => 3,
            OdpError::Io { .. } | OdpError::Format(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, OdpError>;
