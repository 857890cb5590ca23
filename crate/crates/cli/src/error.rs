use std::path::PathBuf;

use echomap::error::Error;
use thiserror::Error;

/// Process exit codes. Usage errors exit with 2 through clap.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const INPUT_FORMAT: i32 = 3;
    pub const ZERO_SOI: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const IO: i32 = 6;
    pub const CONFIG: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("no signals of interest detected in {0}")]
    ZeroSoi(PathBuf),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                Error::Format { .. } | Error::MalformedRecord { .. } | Error::InvalidShape { .. } => exit::INPUT_FORMAT,
                Error::NumericalFailure(_) | Error::NoPeak { .. } => exit::NUMERICAL,
                Error::Io { .. } => exit::IO,
                Error::InvalidParameter(_) | Error::InvalidInput(_) | Error::BehindCamera { .. } => exit::CONFIG,
            },
            CliError::Config(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Format { .. } => exit::INPUT_FORMAT,
            CliError::ZeroSoi(_) => exit::ZERO_SOI,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_classes_have_distinct_codes() {
        let codes = [
            CliError::Core(Error::MalformedRecord {
                index: 1,
                message: String::new(),
            })
            .exit_code(),
            CliError::ZeroSoi(PathBuf::new()).exit_code(),
            CliError::Core(Error::NumericalFailure(String::new())).exit_code(),
            CliError::Config(String::new()).exit_code(),
        ];
        for (i, a) in codes.iter().enumerate() {
            assert_ne!(*a, exit::SUCCESS);
            for b in &codes[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }
}
