use dbar_core::LabError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] LabError),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 0 ok, 2 configuration, 3 solver or numerical failure, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 4,
            CliError::Core(e) => match e {
                LabError::Config(_)
                | LabError::Precondition(_)
                | LabError::Range(_)
                | LabError::DegreeMismatch { .. } => 2,
                LabError::Solver { .. }
                | LabError::Sampling(_)
                | LabError::DenseTooLarge { .. }
                | LabError::Numerical(_) => 3,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
