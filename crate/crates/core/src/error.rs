use std::path::PathBuf;

use crate::gmres::GmresReport;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("GMRES breakdown after {} iterations (relative residual {:.3e})", .report.iterations, .report.final_residual())]
    Breakdown { x: Vec<f64>, report: GmresReport },

    #[error("GMRES did not converge in {} iterations (relative residual {:.3e})", .report.iterations, .report.final_residual())]
    NotConverged { x: Vec<f64>, report: GmresReport },

    #[error("linear solve failed at {location}: {source}")]
    SolveFailed {
        location: String,
        #[source]
        source: Box<Error>,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("reduced model is not asymptotically stable")]
    Unstable,

    #[error("explicit assembly needs {needed} nonzeros, cap is {cap}; use fresh-per-sweep or unpreconditioned mode")]
    AssemblyCap { needed: usize, cap: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }

    /// Wrap a solver error with the coordinates of the failing solve.
    pub fn at(self, location: impl Into<String>) -> Self {
        Error::SolveFailed {
            location: location.into(),
            source: Box::new(self),
        }
    }

    /// True for errors raised by an iterative solve (possibly wrapped).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::Breakdown { .. }
            | Error::NotConverged { .. }
            | Error::Singular(_)
            | Error::Unstable => true,
            Error::SolveFailed { .. } => true,
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
