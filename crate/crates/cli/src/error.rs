use std::path::PathBuf;

use levy_filter::ErrorKind;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{context}: {source}")]
    Engine {
        context: String,
        #[source]
        source: levy_filter::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("acceptance failure: {0}")]
    Acceptance(String),
}

impl CliError {
    pub fn engine(context: impl Into<String>) -> impl FnOnce(levy_filter::Error) -> Self {
        let context = context.into();
        move |source| CliError::Engine { context, source }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Process exit code: 2 config or input, 3 model violation, 4 degeneracy
    /// or numerical breakdown, 5 acceptance failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingInput(_) => 2,
            CliError::Engine { source, .. } => match source.kind() {
                ErrorKind::Parameter => 2,
                ErrorKind::ModelViolation => 3,
                ErrorKind::Degeneracy | ErrorKind::Numeric => 4,
                ErrorKind::Io => 1,
            },
            CliError::Io { .. } => 1,
            CliError::Acceptance(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        if let CliError::MissingInput(_) = self {
            return "missing-input";
        }
        match self.exit_code() {
            2 => "config",
            3 => "model-violation",
            4 => "degeneracy",
            5 => "acceptance",
            _ => "io",
        }
    }

    pub fn report(&self) -> FailureReport {
        FailureReport { status: "error", exit_code: self.exit_code(), kind: self.kind(), message: self.to_string() }
    }
}

/// Machine-readable description of a failed invocation.
#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub status: &'static str,
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let e = |source| CliError::Engine { context: "x".into(), source };
        assert_eq!(e(levy_filter::Error::ModelViolation("l".into())).exit_code(), 3);
        assert_eq!(e(levy_filter::Error::Degeneracy { t: 0.5, detail: "d".into() }).exit_code(), 4);
        assert_eq!(e(levy_filter::Error::Parameter("p".into())).exit_code(), 2);
        assert_eq!(CliError::Config("c".into()).exit_code(), 2);
        assert_eq!(CliError::Acceptance("a".into()).exit_code(), 5);
        let missing = CliError::MissingInput("f.csv".into());
        assert_eq!((missing.exit_code(), missing.report().kind), (2, "missing-input"));
    }
}
