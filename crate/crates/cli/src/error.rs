use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] pamir_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    NotConverged,
    Degraded,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::NotConverged => 2,
            Outcome::Degraded => 3,
        }
    }
}

pub const EXIT_INPUT: i32 = 1;
