use bham::BhamError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),

    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },

    #[error("no complete rows left in {0} after dropping missing values")]
    EmptyAfterFiltering(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] BhamError),
}

impl CliError {
    /// 1 for numerical and I/O failures, 2 for usage, configuration and data errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Model(
                BhamError::SingularSystem
                | BhamError::NegativeEigenvalueBeyondTolerance { .. }
                | BhamError::AsymmetricPenalty(_),
            )
            | CliError::Io(_) => 1,
            _ => 2,
        }
    }
}
