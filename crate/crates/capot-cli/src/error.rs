//! Error taxonomy mapped onto process exit codes: 1 for usage, 2 for
//! data problems, 3 for rewrite-backend failures. Every error renders
//! as a single stderr line so callers can parse it.

use std::fmt;

use capot_core::CoreError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Bad flags or configuration.
    Usage(String),
    /// Input files missing, malformed, or mutually inconsistent.
    Data(String),
    /// The external rewrite backend failed.
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    /// The message with newlines folded, safe to print as one line.
    pub fn one_line(&self) -> String {
        let msg = match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => m,
        };
        msg.lines().map(str::trim_end).collect::<Vec<_>>().join("; ")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.one_line())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> CliError {
        match err {
            CoreError::Rewrite(_) => CliError::Backend(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
