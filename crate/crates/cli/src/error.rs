use std::fmt;

use mre_core::Error as CoreError;

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

/// A failure tagged with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub source: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

pub fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: ExitCode::Usage,
        source: e.into(),
    }
}

/// Classify by the innermost core error: NaN during training is numeric,
/// everything else is a data problem.
impl From<anyhow::Error> for CliError {
    fn from(source: anyhow::Error) -> Self {
        let numeric = source.chain().any(|e| {
            matches!(
                e.downcast_ref::<CoreError>(),
                Some(CoreError::NonFinite { .. })
            )
        });
        let code = if numeric {
            ExitCode::Numeric
        } else {
            ExitCode::Data
        };
        Self { code, source }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        anyhow::Error::from(e).into()
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}
