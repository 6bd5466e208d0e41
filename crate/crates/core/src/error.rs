use thiserror::Error;

/// Errors raised by model construction, simulation and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid campaign schedule: {0}")]
    InvalidSchedule(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative duration {0}")]
    NegativeDuration(f64),

    #[error("matrix exponential produced non-finite entries")]
    NonFinite,

    #[error("opinion {value} of individual {individual} outside [0, 1]")]
    OpinionOutOfRange { individual: usize, value: f64 },

    #[error("negative budget entry {value} at individual {individual}")]
    NegativeBudget { individual: usize, value: f64 },

    #[error("infeasible jump at individual {individual}: budget {budget} exceeds headroom {headroom}")]
    InfeasibleJump {
        individual: usize,
        budget: f64,
        headroom: f64,
    },

    #[error("infeasible plan for player {player}: {reason}")]
    InfeasiblePlan { player: usize, reason: String },

    #[error("invalid game specification: {0}")]
    InvalidSpec(String),

    #[error("unordered or out-of-range sample times: {0}")]
    SampleTimes(String),

    #[error("projection did not converge after {cycles} cycles (violation {violation:e})")]
    ProjectionNonConvergence {
        cycles: usize,
        violation: f64,
        last: Vec<f64>,
    },

    #[error("hypothesis check failed: {0}")]
    Hypothesis(String),

    #[error("wrong game mode: {0}")]
    WrongMode(String),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("problem too large for exhaustive search: {0}")]
    TooLarge(String),
}

pub type Result<T> = std::result::Result<T, Error>;
