use thiserror::Error;

use crate::solver::MaxEntSolution;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid variable set: {0}")]
    InvalidVariableSet(String),

    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),

    #[error("invalid feature `{id}`: {reason}")]
    InvalidFeature { id: String, reason: String },

    #[error("invalid constraint on `{feature_id}`: {reason}")]
    InvalidConstraint { feature_id: String, reason: String },

    #[error("state space has {size} states, above the cap of {cap}")]
    StateSpaceTooLarge { size: u128, cap: usize },

    #[error("feature `{feature}` needs variable `{variable}`, which the assignment does not cover")]
    MissingScopeVariable { feature: String, variable: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no observations in conditioning cell {condition}")]
    EmptyCell { condition: String },

    #[error(
        "target {target} for `{feature_id}`{} lies outside the attainable range [{min}, {max}] (slack included)",
        condition.as_ref().map(|c| format!(" | {c}")).unwrap_or_default()
    )]
    InfeasibleTarget {
        feature_id: String,
        condition: Option<String>,
        target: f64,
        min: f64,
        max: f64,
    },

    #[error("condition {condition} has zero probability under the cause marginal")]
    ZeroSupportCondition { condition: String },

    #[error("non-finite value in {0}; the log-sum-exp path should keep this finite, check the multipliers")]
    NonFinite(String),

    #[error("optimizer did not converge after {} iterations (max residual {:.3e})", .0.iterations, .0.max_residual())]
    NotConverged(Box<MaxEntSolution>),

    #[error("solution has not converged; queries are refused")]
    Unconverged,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("wrong mode: {0}")]
    WrongMode(String),

    #[error("feature set is rank deficient: rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("positivity violated: p({treatment} | {cell}) = 0")]
    Positivity { treatment: String, cell: String },

    #[error("variable `{0}` must be binary")]
    NonBinary(String),

    #[error("marginals disagree on p({variable}) by {diff:.3e}")]
    InconsistentMarginals { variable: String, diff: f64 },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all {0} repetitions were dropped (none converged)")]
    AllRepetitionsDropped(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
