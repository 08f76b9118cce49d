//! Exit-code discipline shared by every subcommand: 1 for usage or
//! configuration problems, 2 for data problems, 3 for training failures.

use std::fmt;

/// Family of a failed run, mapped onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    /// Bad flags, malformed configuration, unknown names: exit 1.
    Usage,
    /// Missing or corrupt inputs, unwritable outputs: exit 2.
    Data,
    /// The optimization itself failed: exit 3.
    Training,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Usage => 1,
            Failure::Data => 2,
            Failure::Training => 3,
        }
    }
}

/// An error tagged with the exit family it belongs to.
#[derive(Debug)]
pub struct CliError {
    pub failure: Failure,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(failure: Failure, source: impl Into<anyhow::Error>) -> Self {
        CliError {
            failure,
            source: source.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.source.fmt(f)
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Tags a fallible step with its exit family.
pub trait Classify<T> {
    fn or_usage(self) -> CliResult<T>;
    fn or_data(self) -> CliResult<T>;
    fn or_training(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_usage(self) -> CliResult<T> {
        self.map_err(|e| CliError::new(Failure::Usage, e))
    }

    fn or_data(self) -> CliResult<T> {
        self.map_err(|e| CliError::new(Failure::Data, e))
    }

    fn or_training(self) -> CliResult<T> {
        self.map_err(|e| CliError::new(Failure::Training, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_contract() {
        assert_eq!(Failure::Usage.code(), 1);
        assert_eq!(Failure::Data.code(), 2);
        assert_eq!(Failure::Training.code(), 3);
    }

    #[test]
    fn classify_tags_errors() {
        let err = Err::<(), _>(std::io::Error::other("boom")).or_data().unwrap_err();
        assert_eq!(err.failure, Failure::Data);
        assert!(err.to_string().contains("boom"));
    }
}
