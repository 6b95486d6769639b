use std::path::PathBuf;

use thiserror::Error;

use crate::coefficients::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid nodes: {0}")]
    InvalidNodes(String),

    #[error("coefficient constraint violated: {0}")]
    Constraint(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned linear solve: residual {residual:e} exceeds {limit:e}")]
    Conditioning { residual: f64, limit: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("coefficient set failed validation:\n{0}")]
    Validation(Box<ValidationReport>),

    #[error("newton iteration failed at stage {stage}: {reason} (last residual {residual:e})")]
    Newton {
        stage: usize,
        reason: NewtonFailure,
        residual: f64,
    },

    #[error("step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("starting procedure did not converge for stage {stage} after {doublings} doublings (last difference {difference:e})")]
    Starting {
        stage: usize,
        doublings: usize,
        difference: f64,
    },

    #[error("reference solution did not converge after {doublings} refinements (last difference {difference:e})")]
    Reference { doublings: usize, difference: f64 },

    #[error("order fit failed: {0}")]
    Fit(String),

    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonFailure {
    MaxIterations,
    Divergence,
    SingularMatrix,
    NonFinite,
}

impl std::fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let text = match self {
            NewtonFailure::MaxIterations => "maximum iterations exceeded",
            NewtonFailure::Divergence => "residual grew for 3 consecutive iterations",
            NewtonFailure::SingularMatrix => "singular iteration matrix",
            NewtonFailure::NonFinite => "non-finite residual",
        };
        f.write_str(text)
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the time integration itself, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Newton { .. }
                | Error::Step { .. }
                | Error::Starting { .. }
                | Error::Reference { .. }
                | Error::Fit(_)
                | Error::Conditioning { .. }
        )
    }
}
