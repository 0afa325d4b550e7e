use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric overflow in {term}: {detail}")]
    NumericOverflow { term: String, detail: String },

    #[error("model violation: {0}")]
    ModelViolation(String),

    #[error("observation diffusion not invertible at t={t}: condition number {condition:.3e}")]
    Singular { t: f64, condition: f64 },

    #[error("divergence at step {step} (t={t}): state norm {norm:.3e} exceeds ceiling {ceiling:.3e}")]
    Divergence {
        step: usize,
        t: f64,
        norm: f64,
        ceiling: f64,
    },

    #[error("weight degeneracy at t={t}: {detail}; increase the particle count or resample more often")]
    Degeneracy { t: f64, detail: String },

    #[error("non-finite {what} at particle {index}")]
    NonFinite { what: String, index: usize },

    #[error("malformed input {path}: {detail}")]
    Format { path: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Parameter,
    ModelViolation,
    Degeneracy,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Parameter(_) | Error::Dimension(_) => ErrorKind::Parameter,
            Error::ModelViolation(_) | Error::Singular { .. } => ErrorKind::ModelViolation,
            Error::Degeneracy { .. } => ErrorKind::Degeneracy,
            Error::NumericOverflow { .. } | Error::Divergence { .. } | Error::NonFinite { .. } => {
                ErrorKind::Numeric
            }
            Error::Format { .. } | Error::Io(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn violation(msg: impl Into<String>) -> Self {
        Error::ModelViolation(msg.into())
    }
}
