//! Error classification for exit codes.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Bad flags, configuration or input files: exit code 1.
    Validation,
    /// Numeric or I/O failure while running: exit code 2.
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Kind::Validation => 1,
            Kind::Runtime => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub fn invalid(message: impl Into<String>) -> CliError {
    CliError {
        kind: Kind::Validation,
        message: message.into(),
    }
}

pub fn runtime(message: impl Into<String>) -> CliError {
    CliError {
        kind: Kind::Runtime,
        message: message.into(),
    }
}

impl From<tangent_core::Error> for CliError {
    fn from(e: tangent_core::Error) -> Self {
        use tangent_core::Error as E;
        let kind = match e {
            E::Shape(_)
            | E::InvalidSpec(_)
            | E::InvalidConfig(_)
            | E::EmptyDataset
            | E::InvalidLabel { .. }
            | E::Format { .. }
            | E::FileIo { .. }
            | E::PathCap { .. } => Kind::Validation,
            E::Domain(_) | E::Convergence { .. } | E::NonFinite(_) | E::Io(_) | E::Json(_) => Kind::Runtime,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        runtime(e.to_string())
    }
}
