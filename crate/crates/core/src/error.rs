use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the zero threshold")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    /// A value left the finite domain. `step` is set when the failure
    /// happened inside an optimization loop.
    #[error("non-finite value in {context}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonFinite {
        context: String,
        step: Option<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("benchmark generation failed: {0}")]
    GenerationFailure(String),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("assertion failed: {0}")]
    Assertion(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
            step: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 0 | success |
    /// | 2 | configuration or usage error |
    /// | 3 | file system error |
    /// | 4 | numeric failure (divergence, degenerate vector, bad shapes) |
    /// | 5 | a requested check did not hold |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::UnknownInstance(_) => 2,
            Error::Io { .. } | Error::Serde(_) => 3,
            Error::ZeroVector { .. }
            | Error::DimMismatch { .. }
            | Error::NonFinite { .. }
            | Error::GenerationFailure(_) => 4,
            Error::Assertion(_) => 5,
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimMismatch { expected, actual })
    }
}
