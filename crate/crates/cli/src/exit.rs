use std::fmt::Display;

pub const VERIFY_FAILED: u8 = 1;
pub const USAGE: u8 = 2;
pub const INPUT: u8 = 3;
pub const PIPELINE: u8 = 4;
pub const NO_PAIRS: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, msg: impl Display) -> Self {
        CliError {
            code,
            source: anyhow::anyhow!("{msg}"),
        }
    }
}

pub trait ExitCodeExt<T> {
    /// Tags an error with the exit code it maps to.
    fn exit_with(self, code: u8) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> ExitCodeExt<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            code,
            source: e.into(),
        })
    }
}
