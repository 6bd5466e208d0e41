use influence_core::Error;
use thiserror::Error as ThisError;

/// Failures of a command, each tied to a stable exit code.
#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),

    #[error("invalid input: {0}")]
    Parse(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("wrong mode: {0}")]
    WrongMode(String),

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::WrongMode(_) => 4,
            CliError::Hypothesis(_) => 5,
            CliError::Runtime(_) => 6,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InfeasiblePlan { player, reason } => {
                CliError::Infeasible(format!("plan of player {}: {reason}", player + 1))
            }
            Error::NegativeBudget { .. } | Error::InfeasibleJump { .. } => CliError::Infeasible(e.to_string()),
            Error::WrongMode(msg) => CliError::WrongMode(msg),
            Error::Hypothesis(msg) => CliError::Hypothesis(msg),
            Error::ProjectionNonConvergence { .. } | Error::NonFinite | Error::TooLarge(_) => {
                CliError::Runtime(e.to_string())
            }
            Error::InvalidNetwork(_)
            | Error::InvalidSchedule(_)
            | Error::Dimension(_)
            | Error::NegativeDuration(_)
            | Error::OpinionOutOfRange { .. }
            | Error::InvalidSpec(_)
            | Error::SampleTimes(_)
            | Error::Config(_) => CliError::Parse(e.to_string()),
        }
    }
}
