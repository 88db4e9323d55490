use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("simulation diverged on path {path} at step {step}")]
    SimulationDiverged { path: usize, step: usize },

    #[error(
        "hitting-time budget of {budget} steps exhausted after finding {found} of {wanted} copies"
    )]
    HittingBudget {
        budget: usize,
        found: usize,
        wanted: usize,
    },

    #[error("{failed} of {total} repetitions failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed input {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
