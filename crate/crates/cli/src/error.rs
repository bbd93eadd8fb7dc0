use thiserror::Error;

/// Failure of a run, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: missing files, malformed headers, shape or SPD violations,
    /// incompatible data without `--force`. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// The numerics broke down: degenerate immersions, non-finite values.
    /// Exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }
}

impl From<fundform::Error> for CliError {
    fn from(e: fundform::Error) -> Self {
        use fundform::Error as E;
        match e {
            E::DegenerateImmersion { .. } | E::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
