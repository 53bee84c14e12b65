use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate weights: every log-weight is -inf or NaN")]
    DegenerateWeights,

    #[error("degenerate sweep at timestep {t}: no particle has a finite incremental weight")]
    DegenerateSweep { t: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("estimator {estimator} requires a {expected} sweep, got {found}")]
    EstimatorMismatch {
        estimator: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },

    #[error("shape mismatch for `{name}`: expected {expected}, got {found}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("enumeration budget exceeded: {paths} paths > {budget}")]
    EnumerationBudget { paths: u128, budget: u128 },

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
