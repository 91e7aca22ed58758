use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("experiment `{id}` failed: {message}")]
    Experiment { id: String, message: String },
    #[error("ledger {0} holds no readable entries")]
    EmptyLedger(String),
    #[error("report is partial: {0} unreadable entries skipped")]
    PartialReport(usize),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that happens at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => 2,
            CliError::Experiment { .. } | CliError::EmptyLedger(_) | CliError::PartialReport(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
