use std::fmt;
use std::process::ExitCode;

/// Failure classes and their process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Data,
    Model,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Usage => 1,
            Failure::Data => 2,
            Failure::Model => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        CliError {
            failure: Failure::Usage,
            source: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.failure.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a failure class and context to any error.
pub trait Classify<T> {
    fn data(self, context: impl fmt::Display) -> CliResult<T>;
    fn model(self, context: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            failure: Failure::Data,
            source: e.into().context(context.to_string()),
        })
    }

    fn model(self, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError {
            failure: Failure::Model,
            source: e.into().context(context.to_string()),
        })
    }
}
