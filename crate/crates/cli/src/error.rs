use std::fmt;

use serde::Serialize;

/// Process exit codes. Each failure class has its own code.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const INVALID_PARAM: i32 = 2;
    pub const MISSING_INPUT: i32 = 3;
    pub const PROVENANCE: i32 = 4;
    pub const FORMAT: i32 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn param(message: impl Into<String>) -> Self {
        CliError {
            code: exit::INVALID_PARAM,
            kind: "invalid_param",
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        CliError {
            code: exit::MISSING_INPUT,
            kind: "missing_input",
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        CliError {
            code: exit::FORMAT,
            kind: "format",
            message: message.into(),
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("error serialises")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<crosstopic::Error> for CliError {
    fn from(e: crosstopic::Error) -> Self {
        use crosstopic::Error as E;
        let (code, kind) = match &e {
            E::InvalidParam(_) => (exit::INVALID_PARAM, "invalid_param"),
            E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                (exit::MISSING_INPUT, "missing_input")
            }
            E::Io { .. } => (exit::MISSING_INPUT, "io"),
            E::Provenance { .. } => (exit::PROVENANCE, "provenance_mismatch"),
            E::Format(_) | E::Json(_) => (exit::FORMAT, "format"),
            E::InvalidInput(_) => (exit::OTHER, "invalid_input"),
            E::Provider(_) => (exit::OTHER, "provider"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::format(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
