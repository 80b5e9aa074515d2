use std::fmt;
use std::path::Path;

use wafer_core::Error;

/// A failure with the process exit status it maps to: 1 for configuration
/// problems, 2 for data problems, 3 for numeric failures.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }

    /// Prefixes the message with the file it concerns.
    pub fn in_file(mut self, path: &Path) -> Self {
        let shown = path.display().to_string();
        if !self.message.starts_with(&shown) {
            self.message = format!("{shown}: {}", self.message);
        }
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric { .. } => Self::numeric(e.to_string()),
            Error::Config(_) => Self::config(e.to_string()),
            _ => Self::data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
