use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Zero-variance Gaussian (both photon means and the leakage vanish).
    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    /// Saddle point too close to the origin for the leading-order formula.
    #[error("saddle point degenerate (|s| = {s:.3e}); distribution mean is ~0")]
    SaddleDegenerate { s: f64 },

    #[error("no saddle point bracket found within |t| <= {limit}")]
    NoSaddle { limit: f64 },

    #[error("range error: exponent overflow at t = {t}")]
    Range { t: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate recording: {0}")]
    DegenerateRecording(String),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("singular fit: {0}")]
    SingularFit(String),

    #[error("fit did not converge (best objective {best_objective:.4e})")]
    NonConvergence { best_objective: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
