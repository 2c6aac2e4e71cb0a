use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants split into two groups that the command-line front end maps
/// to distinct exit codes: input validation problems and numerical failures.
#[derive(Debug, Error)]
pub enum PrivetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tail window too small: {m} points in window, need at least {min}")]
    WindowTooSmall { m: usize, min: usize },

    #[error("degenerate distances: {0}")]
    Degenerate(String),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl PrivetError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PrivetError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            PrivetError::Degenerate(_) | PrivetError::NoConvergence(_) | PrivetError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, PrivetError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PrivetError::Invalid(msg.into()))
}
